use rand::Rng;

use crate::config::KeyValues;
use crate::data::resize_slice;
use crate::error::{Error, Result};
use crate::nn::{Backbone, Init, Linear, Model};
use crate::tensor::{Bound, ParamSet, Scalar, Tape, Var};

/// Maps one `H×W` slice to P(COVID-19).
pub trait SliceScorer: Sync {
    fn score(&self, slice: &[f32], hw: (usize, usize)) -> Result<f64>;
}

/// Returns the same probability for every slice.
#[derive(Clone, Copy, Debug)]
pub struct ConstantScorer(pub f64);

impl SliceScorer for ConstantScorer {
    fn score(&self, _: &[f32], _: (usize, usize)) -> Result<f64> {
        Ok(self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScorerConfig {
    pub input_hw: (usize, usize),
    pub backbone_channels: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            input_hw: (64, 64),
            backbone_channels: vec![8, 16, 32, 32],
            leaky_slope: 0.01,
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_hw.0 == 0 || self.input_hw.1 == 0 {
            return Err(Error::Parameter("input size must be ≥ 1".into()));
        }
        if self.backbone_channels.is_empty() || self.backbone_channels.contains(&0) {
            return Err(Error::Parameter("backbone needs at least one stage with ≥ 1 channel".into()));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Parameter(format!("LeakyReLU slope must lie in (0, 1), got {}", self.leaky_slope)));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.insert("input_h", self.input_hw.0);
        kv.insert("input_w", self.input_hw.1);
        kv.insert(
            "channels",
            self.backbone_channels.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
        );
        kv.insert("leaky_slope", self.leaky_slope);
        kv
    }

    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let d = ScorerConfig::default();
        let cfg = ScorerConfig {
            input_hw: (kv.take_or("input_h", d.input_hw.0)?, kv.take_or("input_w", d.input_hw.1)?),
            backbone_channels: kv.take_list("channels")?.unwrap_or(d.backbone_channels),
            leaky_slope: kv.take_or("leaky_slope", d.leaky_slope)?,
        };
        kv.finish().map_err(|e| Error::Config(format!("scorer: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Slice classifier: the strided CNN backbone, flattened, then one affine
/// layer to two logits.
#[derive(Clone, Debug)]
pub struct ScorerNet<T> {
    pub config: ScorerConfig,
    params: ParamSet<T>,
    backbone: Backbone,
    head: Linear,
}

impl<T: Scalar> ScorerNet<T> {
    pub fn new<R: Rng + ?Sized>(config: ScorerConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let backbone = Backbone::new(
            &mut params,
            "backbone",
            config.input_hw,
            &config.backbone_channels,
            config.leaky_slope,
            rng,
        );
        let (c, h, w) = Backbone::output_dims(config.input_hw, &config.backbone_channels);
        let head = Linear::new(&mut params, "head", c * h * w, 2, Init::Linear, rng);
        Ok(ScorerNet {
            config,
            params,
            backbone,
            head,
        })
    }

    /// Resizes `slice` to the configured input size when needed.
    pub fn prepare(&self, slice: &[f32], hw: (usize, usize)) -> Vec<f32> {
        if hw == self.config.input_hw {
            slice.to_vec()
        } else {
            resize_slice(slice, hw, self.config.input_hw)
        }
    }
}

impl<T: Scalar> Model<T> for ScorerNet<T> {
    /// A slice already at the configured input size.
    type Input = Vec<f32>;

    fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    fn logits(&self, tape: &mut Tape<T>, p: &Bound, input: &Vec<f32>) -> Result<Var> {
        let f = self.backbone.forward(tape, p, input)?;
        let n = tape.value(f).len();
        let flat = tape.reshape(f, &[1, n])?;
        self.head.forward(tape, p, flat)
    }
}

impl<T: Scalar> SliceScorer for ScorerNet<T> {
    fn score(&self, slice: &[f32], hw: (usize, usize)) -> Result<f64> {
        self.probability(&self.prepare(slice, hw))
    }
}
