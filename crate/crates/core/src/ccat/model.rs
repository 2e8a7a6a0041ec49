use rand::Rng;

use super::blocks::Encoder;
use super::config::CcatConfig;
use super::posenc::{sinusoid_1d, sinusoid_2d};
use crate::data::{centered_strided, resize_slice, strided_sample, CtVolume};
use crate::error::{Error, Result};
use crate::nn::{Backbone, Init, Linear, Model};
use crate::tensor::{Bound, ParamSet, Scalar, Tape, Tensor, Var};

/// Backbone → tokenizer → within-slice encoder (one vector per slice) →
/// between-slice encoder (one vector per scan) → three-layer classifier.
#[derive(Clone, Debug)]
pub struct CcatModel<T> {
    pub config: CcatConfig,
    params: ParamSet<T>,
    pub backbone: Backbone,
    pub tokenizer: Linear,
    pub wst: Encoder,
    pub bst: Encoder,
    /// Exactly three affine layers; LeakyReLU follows the first two.
    pub classifier: [Linear; 3],
}

/// Attention weights recorded during one forward pass, per slice for the
/// within-slice encoder and once for the between-slice encoder.
#[derive(Clone, Debug, Default)]
pub struct AttentionTrace {
    pub within: Vec<Vec<Var>>,
    pub between: Vec<Var>,
}

impl<T: Scalar> CcatModel<T> {
    pub fn new<R: Rng + ?Sized>(config: CcatConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let slope = config.leaky_slope;
        let backbone = Backbone::new(&mut params, "backbone", config.input_hw, &config.backbone_channels, slope, rng);
        let (c, _, _) = config.feature_dims();
        let d = config.d_model;
        let tokenizer = Linear::new(&mut params, "tokenizer", c, d, Init::Linear, rng);
        let wst = Encoder::new(&mut params, "wst", d, config.heads, config.depth, config.tokens(), slope, rng);
        let bst = Encoder::new(&mut params, "bst", d, config.heads, config.depth, config.slices, slope, rng);
        let (h1, h2) = config.hidden;
        let classifier = [
            Linear::new(&mut params, "classifier.0", d, h1, Init::Activated, rng),
            Linear::new(&mut params, "classifier.1", h1, h2, Init::Activated, rng),
            Linear::new(&mut params, "classifier.2", h2, 2, Init::Zero, rng),
        ];
        Ok(CcatModel {
            config,
            params,
            backbone,
            tokenizer,
            wst,
            bst,
            classifier,
        })
    }

    /// Copies every `backbone.*` tensor from `source` (a slice scorer
    /// shares the layout). Returns how many tensors were copied.
    pub fn adopt_backbone(&mut self, source: &ParamSet<T>) -> Result<usize> {
        let mut copied = 0;
        for (name, t) in self.params.iter_mut() {
            if !name.starts_with("backbone.") {
                continue;
            }
            let src = source
                .find(name)
                .map(|id| source.get(id))
                .ok_or_else(|| Error::Contract(format!("backbone source lacks {name}")))?;
            if src.shape() != t.shape() {
                return Err(Error::Contract(format!(
                    "backbone tensor {name}: shape {:?} vs {:?}",
                    src.shape(),
                    t.shape()
                )));
            }
            t.data_mut().copy_from_slice(src.data());
            copied += 1;
        }
        Ok(copied)
    }

    fn slope(&self) -> T {
        T::of(self.config.leaky_slope)
    }

    /// One slice to a `c×h_f×w_f` feature map.
    pub fn backbone_forward(&self, tape: &mut Tape<T>, p: &Bound, slice: &[f32]) -> Result<Var> {
        self.backbone.forward(tape, p, slice)
    }

    /// Feature map to `[(h_f·w_f)×d_model]` tokens in row-major position
    /// order, plus the 2-D encoding when enabled.
    pub fn tokenize(&self, tape: &mut Tape<T>, p: &Bound, fmap: Var) -> Result<Var> {
        let (c, h, w) = match tape.shape(fmap) {
            &[c, h, w] => (c, h, w),
            s => return Err(Error::Dimension(format!("feature map must be c×h×w, got {s:?}"))),
        };
        let flat = tape.reshape(fmap, &[c, h * w])?;
        let tokens = tape.transpose(flat)?;
        let x = self.tokenizer.forward(tape, p, tokens)?;
        if !self.config.spatial_pe {
            return Ok(x);
        }
        let d = self.config.d_model;
        let pe = sinusoid_2d(h, w, d).into_iter().map(T::of).collect();
        let pe = tape.constant(Tensor::new([h * w, d], pe)?)?;
        tape.add(x, pe)
    }

    /// Tokens of one slice to its `[1×d_model]` context vector.
    pub fn wst_forward(&self, tape: &mut Tape<T>, p: &Bound, tokens: Var, weights: &mut Vec<Var>) -> Result<Var> {
        self.wst.forward(tape, p, tokens, weights)
    }

    /// Exactly `L_s` slice vectors to the `[1×d_model]` scan vector.
    pub fn bst_forward(&self, tape: &mut Tape<T>, p: &Bound, slice_vectors: &[Var], weights: &mut Vec<Var>) -> Result<Var> {
        let ls = self.config.slices;
        if slice_vectors.len() != ls {
            return Err(Error::Dimension(format!(
                "between-slice encoder expects {ls} slice vectors, got {}",
                slice_vectors.len()
            )));
        }
        let mut x = tape.stack_rows(slice_vectors)?;
        if self.config.sequence_pe {
            let d = self.config.d_model;
            let pe = sinusoid_1d(ls, d).into_iter().map(T::of).collect();
            let pe = tape.constant(Tensor::new([ls, d], pe)?)?;
            x = tape.add(x, pe)?;
        }
        self.bst.forward(tape, p, x, weights)
    }

    /// Scan vector to `[1×2]` logits.
    pub fn classify(&self, tape: &mut Tape<T>, p: &Bound, scan_vector: Var) -> Result<Var> {
        let [l1, l2, l3] = &self.classifier;
        let x = l1.forward(tape, p, scan_vector)?;
        let x = tape.leaky_relu(x, self.slope())?;
        let x = l2.forward(tape, p, x)?;
        let x = tape.leaky_relu(x, self.slope())?;
        l3.forward(tape, p, x)
    }

    pub fn forward_traced(&self, tape: &mut Tape<T>, p: &Bound, slices: &[Vec<f32>], trace: &mut AttentionTrace) -> Result<Var> {
        let mut vectors = Vec::with_capacity(slices.len());
        for s in slices {
            let fmap = self.backbone_forward(tape, p, s)?;
            let tokens = self.tokenize(tape, p, fmap)?;
            let mut w = Vec::new();
            vectors.push(self.wst_forward(tape, p, tokens, &mut w)?);
            trace.within.push(w);
        }
        let scan = self.bst_forward(tape, p, &vectors, &mut trace.between)?;
        self.classify(tape, p, scan)
    }

    /// Resized slices at `indices`, ready to be a model input.
    pub fn input_from(&self, volume: &CtVolume, indices: &[usize]) -> Vec<Vec<f32>> {
        let hw = (volume.height(), volume.width());
        indices
            .iter()
            .map(|&i| {
                let s = volume.slice(i);
                if hw == self.config.input_hw {
                    s.to_vec()
                } else {
                    resize_slice(s, hw, self.config.input_hw)
                }
            })
            .collect()
    }

    /// Deterministic centered stride window.
    pub fn eval_indices(&self, depth: usize) -> Vec<usize> {
        centered_strided(depth, self.config.slices, self.config.slice_stride)
    }

    pub fn random_indices<R: Rng + ?Sized>(&self, depth: usize, rng: &mut R) -> Vec<usize> {
        strided_sample(depth, self.config.slices, self.config.slice_stride, rng)
    }

    /// P(COVID-19) for a scan, using the evaluation window.
    pub fn predict(&self, volume: &CtVolume) -> Result<f64> {
        self.probability(&self.input_from(volume, &self.eval_indices(volume.depth())))
    }
}

impl<T: Scalar> Model<T> for CcatModel<T> {
    /// `L_s` slices at the configured input size.
    type Input = Vec<Vec<f32>>;

    fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    fn logits(&self, tape: &mut Tape<T>, p: &Bound, input: &Vec<Vec<f32>>) -> Result<Var> {
        self.forward_traced(tape, p, input, &mut AttentionTrace::default())
    }
}
