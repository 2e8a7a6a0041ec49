use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::nn::{Backbone, Linear};

pub const LEAKY_SLOPE: f64 = 0.01;

/// Architecture hyperparameters of the CCAT model.
#[derive(Clone, Debug, PartialEq)]
pub struct CcatConfig {
    /// Slices are resized to this `H×W` before the backbone.
    pub input_hw: (usize, usize),
    /// Output channels of each stride-2 backbone stage; the last one is `c`.
    pub backbone_channels: Vec<usize>,
    pub d_model: usize,
    /// Attention heads; 0 selects the gMLP spatial-gating block.
    pub heads: usize,
    /// Blocks per transformer (within-slice and between-slice alike).
    pub depth: usize,
    /// `L_s`: slices per scan.
    pub slices: usize,
    /// `L_freq`: stride between sampled slices.
    pub slice_stride: usize,
    pub spatial_pe: bool,
    pub sequence_pe: bool,
    pub hidden: (usize, usize),
    pub leaky_slope: f64,
}

impl Default for CcatConfig {
    fn default() -> Self {
        CcatConfig {
            input_hw: (64, 64),
            backbone_channels: vec![8, 16, 32, 32],
            d_model: 128,
            heads: 0,
            depth: 2,
            slices: 16,
            slice_stride: 2,
            spatial_pe: true,
            sequence_pe: true,
            hidden: (64, 32),
            leaky_slope: LEAKY_SLOPE,
        }
    }
}

impl CcatConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.input_hw.0 == 0 || self.input_hw.1 == 0 {
            return bad("input size must be ≥ 1".into());
        }
        if self.backbone_channels.is_empty() || self.backbone_channels.contains(&0) {
            return bad("backbone needs at least one stage with ≥ 1 channel".into());
        }
        if self.d_model == 0 || self.slices == 0 || self.slice_stride == 0 || self.hidden.0 == 0 || self.hidden.1 == 0 {
            return bad("d_model, slices, stride and hidden sizes must be ≥ 1".into());
        }
        if self.heads != 0 && !self.d_model.is_multiple_of(self.heads) {
            return bad(format!("d_model {} is not divisible by {} heads", self.d_model, self.heads));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return bad(format!("LeakyReLU slope must lie in (0, 1), got {}", self.leaky_slope));
        }
        Ok(())
    }

    /// `(c, h_f, w_f)` of the backbone feature map.
    pub fn feature_dims(&self) -> (usize, usize, usize) {
        Backbone::output_dims(self.input_hw, &self.backbone_channels)
    }

    /// Spatial tokens per slice, `h_f · w_f`.
    pub fn tokens(&self) -> usize {
        let (_, h, w) = self.feature_dims();
        h * w
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let (c, _, _) = self.feature_dims();
        let block = |n: usize| {
            if self.heads == 0 {
                2 * d + Linear::param_count(d, 4 * d) + n * n + n + Linear::param_count(2 * d, d)
            } else {
                4 * d + 4 * Linear::param_count(d, d) + Linear::param_count(d, 4 * d) + Linear::param_count(4 * d, d)
            }
        };
        Backbone::param_count(&self.backbone_channels)
            + Linear::param_count(c, d)
            + self.depth * (block(self.tokens()) + block(self.slices))
            + Linear::param_count(d, self.hidden.0)
            + Linear::param_count(self.hidden.0, self.hidden.1)
            + Linear::param_count(self.hidden.1, 2)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.insert("input_h", self.input_hw.0);
        kv.insert("input_w", self.input_hw.1);
        kv.insert(
            "channels",
            self.backbone_channels.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
        );
        kv.insert("d_model", self.d_model);
        kv.insert("heads", self.heads);
        kv.insert("depth", self.depth);
        kv.insert("slices", self.slices);
        kv.insert("stride", self.slice_stride);
        kv.insert("spatial_pe", self.spatial_pe);
        kv.insert("sequence_pe", self.sequence_pe);
        kv.insert("hidden1", self.hidden.0);
        kv.insert("hidden2", self.hidden.1);
        kv.insert("leaky_slope", self.leaky_slope);
        kv
    }

    /// Reads keys (without the `ccat.` prefix), defaulting anything absent.
    /// Leftover keys are an error.
    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let d = CcatConfig::default();
        let cfg = CcatConfig {
            input_hw: (kv.take_or("input_h", d.input_hw.0)?, kv.take_or("input_w", d.input_hw.1)?),
            backbone_channels: kv.take_list("channels")?.unwrap_or(d.backbone_channels),
            d_model: kv.take_or("d_model", d.d_model)?,
            heads: kv.take_or("heads", d.heads)?,
            depth: kv.take_or("depth", d.depth)?,
            slices: kv.take_or("slices", d.slices)?,
            slice_stride: kv.take_or("stride", d.slice_stride)?,
            spatial_pe: kv.take_or("spatial_pe", d.spatial_pe)?,
            sequence_pe: kv.take_or("sequence_pe", d.sequence_pe)?,
            hidden: (kv.take_or("hidden1", d.hidden.0)?, kv.take_or("hidden2", d.hidden.1)?),
            leaky_slope: kv.take_or("leaky_slope", d.leaky_slope)?,
        };
        kv.finish().map_err(|e| Error::Config(format!("ccat: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
