use crate::config::KeyValues;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    /// Epochs between learning-rate decays.
    pub step_size: usize,
    pub gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Save a checkpoint every this many epochs; 0 saves only at the end.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-4,
            step_size: 20,
            gamma: 0.5,
            epochs: 100,
            batch_size: 8,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults for scan-level (CCAT) training.
    pub fn scans() -> Self {
        TrainConfig::default()
    }

    /// Defaults for slice-level (scorer) training.
    pub fn slices() -> Self {
        TrainConfig {
            batch_size: 64,
            ..TrainConfig::default()
        }
    }

    /// `lr0 = 0` is allowed: it freezes the parameters.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.to_string()));
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return bad("learning rate must be finite and ≥ 0");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if self.step_size == 0 || self.epochs == 0 || self.batch_size == 0 {
            return bad("step size, epochs and batch size must be ≥ 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return bad("Adam needs beta1, beta2 in [0, 1) and eps > 0");
        }
        Ok(())
    }

    /// `lr0 · gamma^⌊epoch / step_size⌋`.
    pub fn step_lr(&self, epoch: usize) -> f64 {
        self.lr0 * self.gamma.powi((epoch / self.step_size) as i32)
    }

    /// `lr=… step=… epochs=…`
    pub fn header(&self) -> String {
        format!("lr={} step={} epochs={}", self.lr0, self.step_size, self.epochs)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.insert("lr0", self.lr0);
        kv.insert("step_size", self.step_size);
        kv.insert("gamma", self.gamma);
        kv.insert("epochs", self.epochs);
        kv.insert("batch_size", self.batch_size);
        kv.insert("beta1", self.beta1);
        kv.insert("beta2", self.beta2);
        kv.insert("eps", self.eps);
        kv.insert("seed", self.seed);
        kv.insert("checkpoint_every", self.checkpoint_every);
        kv
    }

    /// Reads keys over `base`; leftover keys are an error.
    pub fn from_kv(mut kv: KeyValues, base: TrainConfig) -> Result<Self> {
        let cfg = TrainConfig {
            lr0: kv.take_or("lr0", base.lr0)?,
            step_size: kv.take_or("step_size", base.step_size)?,
            gamma: kv.take_or("gamma", base.gamma)?,
            epochs: kv.take_or("epochs", base.epochs)?,
            batch_size: kv.take_or("batch_size", base.batch_size)?,
            beta1: kv.take_or("beta1", base.beta1)?,
            beta2: kv.take_or("beta2", base.beta2)?,
            eps: kv.take_or("eps", base.eps)?,
            seed: kv.take_or("seed", base.seed)?,
            checkpoint_every: kv.take_or("checkpoint_every", base.checkpoint_every)?,
        };
        kv.finish().map_err(|e| Error::Config(format!("train: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
