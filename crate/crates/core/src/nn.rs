//! Parameterized layers shared by the slice scorer and the CCAT model.

use rand::Rng;

use crate::error::Result;
use crate::tensor::{Bound, ParamId, ParamSet, Scalar, Tape, Tensor, Var};

/// Anything trainable by [`crate::train`]: a parameter set plus a function
/// from one input to `[1×2]` logits (index 1 = COVID-19).
pub trait Model<T: Scalar>: Sync {
    type Input: Sync;

    fn params(&self) -> &ParamSet<T>;
    fn params_mut(&mut self) -> &mut ParamSet<T>;
    fn logits(&self, tape: &mut Tape<T>, bound: &Bound, input: &Self::Input) -> Result<Var>;

    /// P(COVID-19) for one input, evaluated on a throwaway tape.
    fn probability(&self, input: &Self::Input) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.params().bind(&mut tape)?;
        let z = self.logits(&mut tape, &bound, input)?;
        let p = tape.softmax(z, 1)?;
        Ok(tape.value(p)[1].to_f64())
    }
}

/// Uniform draw with variance `gain / fan_in`: `gain = 2` before a
/// LeakyReLU (Kaiming), `gain = 1` otherwise.
pub(crate) fn fan_in_uniform<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, gain: f64, rng: &mut R) -> Tensor<T> {
    let bound = (3.0 * gain / fan_in as f64).sqrt();
    Tensor::from_fn(shape.to_vec(), |_| T::of(rng.random_range(-bound..=bound)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Kaiming-style, for layers followed by LeakyReLU.
    Activated,
    /// Fan-in scaled with unit gain.
    Linear,
    Zero,
}

/// `y = x·W + b` with `W: [in×out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(params: &mut ParamSet<T>, name: &str, fan_in: usize, fan_out: usize, init: Init, rng: &mut R) -> Self {
        let w = match init {
            Init::Activated => fan_in_uniform(&[fan_in, fan_out], fan_in, 2.0, rng),
            Init::Linear => fan_in_uniform(&[fan_in, fan_out], fan_in, 1.0, rng),
            Init::Zero => Tensor::zeros([fan_in, fan_out]),
        };
        Linear {
            weight: params.add(format!("{name}.weight"), w),
            bias: params.add(format!("{name}.bias"), Tensor::zeros([fan_out])),
            fan_in,
            fan_out,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let y = tape.matmul(x, p[self.weight])?;
        tape.add_row_bias(y, p[self.bias])
    }

    pub fn param_count(fan_in: usize, fan_out: usize) -> usize {
        fan_in * fan_out + fan_out
    }
}

/// 3×3 convolution, stride 2, padding 1, with bias.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
}

pub const CONV_KERNEL: usize = 3;
pub const CONV_STRIDE: usize = 2;
pub const CONV_PAD: usize = 1;

impl Conv {
    pub fn new<T: Scalar, R: Rng + ?Sized>(params: &mut ParamSet<T>, name: &str, c_in: usize, c_out: usize, rng: &mut R) -> Self {
        let k = CONV_KERNEL;
        let w = fan_in_uniform(&[c_out, c_in, k, k], c_in * k * k, 2.0, rng);
        Conv {
            weight: params.add(format!("{name}.weight"), w),
            bias: params.add(format!("{name}.bias"), Tensor::zeros([c_out])),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        tape.conv2d(x, p[self.weight], Some(p[self.bias]), CONV_STRIDE, CONV_PAD)
    }

    pub fn output_size(n: usize) -> usize {
        (n + 2 * CONV_PAD - CONV_KERNEL) / CONV_STRIDE + 1
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub eps: f64,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new<T: Scalar>(params: &mut ParamSet<T>, name: &str, dim: usize) -> Self {
        LayerNorm {
            gain: params.add(format!("{name}.gain"), Tensor::full([dim], T::one())),
            bias: params.add(format!("{name}.bias"), Tensor::zeros([dim])),
            eps: LAYER_NORM_EPS,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        tape.layer_norm(x, p[self.gain], p[self.bias], T::of(self.eps))
    }
}

/// Strided CNN: each stage is a stride-2 3×3 convolution followed by
/// LeakyReLU. The spatial map is returned as is, never pooled.
#[derive(Clone, Debug)]
pub struct Backbone {
    pub stages: Vec<Conv>,
    pub input_hw: (usize, usize),
    pub channels: Vec<usize>,
    pub slope: f64,
}

impl Backbone {
    pub fn new<T: Scalar, R: Rng + ?Sized>(params: &mut ParamSet<T>, name: &str, input_hw: (usize, usize), channels: &[usize], slope: f64, rng: &mut R) -> Self {
        let mut c_in = 1;
        let stages = channels
            .iter()
            .enumerate()
            .map(|(i, &c_out)| {
                let conv = Conv::new(params, &format!("{name}.{i}"), c_in, c_out, rng);
                c_in = c_out;
                conv
            })
            .collect();
        Backbone {
            stages,
            input_hw,
            channels: channels.to_vec(),
            slope,
        }
    }

    /// `(c, h_f, w_f)` of the output feature map.
    pub fn output_dims(input_hw: (usize, usize), channels: &[usize]) -> (usize, usize, usize) {
        let (mut h, mut w) = input_hw;
        for _ in channels {
            h = Conv::output_size(h);
            w = Conv::output_size(w);
        }
        (*channels.last().unwrap_or(&1), h, w)
    }

    /// `slice` is one `H×W` image; returns a `c×h_f×w_f` feature map.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, slice: &[f32]) -> Result<Var> {
        let (h, w) = self.input_hw;
        if slice.len() != h * w {
            return Err(crate::Error::Dimension(format!(
                "backbone expects a {h}×{w} slice, got {} pixels",
                slice.len()
            )));
        }
        let mut x = tape.constant(Tensor::new([1, h, w], slice.iter().map(|&v| T::from_f32(v)).collect())?)?;
        for conv in &self.stages {
            x = conv.forward(tape, p, x)?;
            x = tape.leaky_relu(x, T::of(self.slope))?;
        }
        Ok(x)
    }

    pub fn param_count(channels: &[usize]) -> usize {
        let mut c_in = 1;
        channels
            .iter()
            .map(|&c| {
                let n = c * c_in * CONV_KERNEL * CONV_KERNEL + c;
                c_in = c;
                n
            })
            .sum()
    }
}
