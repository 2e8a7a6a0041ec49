//! Saved models: the parameter checkpoint, a `key = value` companion file
//! holding the architecture (and training progress), and optionally the
//! optimizer moments for resuming.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ccat::{CcatConfig, CcatModel};
use crate::config::KeyValues;
use crate::dwcc::{ScorerConfig, ScorerNet};
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::tensor::{read_checkpoint, write_checkpoint, ParamSet};
use crate::train::{OptimizerState, TrainState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Ccat,
    Scorer,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ccat => "ccat",
            ModelKind::Scorer => "scorer",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ccat" => Ok(ModelKind::Ccat),
            "scorer" => Ok(ModelKind::Scorer),
            _ => Err(Error::Config(format!("unknown model kind `{s}`"))),
        }
    }
}

/// A model type that can be written next to its architecture.
pub trait Persist: Model<f32> {
    const KIND: ModelKind;
    fn config_kv(&self) -> KeyValues;
}

impl Persist for CcatModel<f32> {
    const KIND: ModelKind = ModelKind::Ccat;

    fn config_kv(&self) -> KeyValues {
        self.config.to_kv()
    }
}

impl Persist for ScorerNet<f32> {
    const KIND: ModelKind = ModelKind::Scorer;

    fn config_kv(&self) -> KeyValues {
        self.config.to_kv()
    }
}

#[allow(clippy::large_enum_variant)]
pub enum SavedModel {
    Ccat(CcatModel<f32>),
    Scorer(ScorerNet<f32>),
}

impl SavedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            SavedModel::Ccat(_) => ModelKind::Ccat,
            SavedModel::Scorer(_) => ModelKind::Scorer,
        }
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// `<checkpoint>.config`
pub fn companion_path(checkpoint: &Path) -> PathBuf {
    with_suffix(checkpoint, ".config")
}

/// `<checkpoint>.opt`
pub fn optimizer_path(checkpoint: &Path) -> PathBuf {
    with_suffix(checkpoint, ".opt")
}

pub fn save_model<M: Persist>(path: &Path, model: &M, state: Option<&TrainState<f32>>) -> Result<()> {
    let mut kv = model.config_kv().with_prefix(M::KIND.as_str());
    kv.insert("model.kind", M::KIND);
    if let Some(s) = state {
        kv.insert("state.epochs_done", s.epochs_done);
        kv.insert("state.adam_t", s.optimizer.t);
        write_checkpoint(&optimizer_path(path), &s.optimizer.to_param_set(model.params()))?;
    }
    write_checkpoint(path, model.params())?;
    let companion = companion_path(path);
    std::fs::write(&companion, kv.to_text()).map_err(|e| Error::io(&companion, e))
}

fn install<M: Model<f32>>(model: &mut M, saved: &ParamSet<f32>, path: &Path) -> Result<()> {
    model
        .params_mut()
        .load_values(saved)
        .map_err(|e| Error::Contract(format!("{}: {e}", path.display())))
}

/// Rebuilds the model from the companion file and loads its parameters.
/// Training progress is returned when the checkpoint carries it.
pub fn load_model(path: &Path) -> Result<(SavedModel, Option<TrainState<f32>>)> {
    let mut kv = KeyValues::read(&companion_path(path))?;
    let kind: ModelKind = kv
        .take("model.kind")?
        .ok_or_else(|| Error::Config(format!("{}: missing `model.kind`", companion_path(path).display())))?;
    let epochs_done: Option<usize> = kv.take("state.epochs_done")?;
    let adam_t: Option<u64> = kv.take("state.adam_t")?;
    let section = kv.section(kind.as_str());
    kv.finish()?;
    let saved = read_checkpoint::<f32>(path)?;
    // Initial values are overwritten by the checkpoint.
    let rng = &mut ChaCha8Rng::seed_from_u64(0);
    let model = match kind {
        ModelKind::Ccat => {
            let mut m = CcatModel::new(CcatConfig::from_kv(section)?, rng)?;
            install(&mut m, &saved, path)?;
            SavedModel::Ccat(m)
        }
        ModelKind::Scorer => {
            let mut m = ScorerNet::new(ScorerConfig::from_kv(section)?, rng)?;
            install(&mut m, &saved, path)?;
            SavedModel::Scorer(m)
        }
    };
    let state = match (epochs_done, adam_t) {
        (Some(epochs_done), Some(t)) => {
            let params = match &model {
                SavedModel::Ccat(m) => m.params(),
                SavedModel::Scorer(m) => m.params(),
            };
            let moments = read_checkpoint::<f32>(&optimizer_path(path))?;
            Some(TrainState {
                optimizer: OptimizerState::from_param_set(&moments, params, t)?,
                epochs_done,
            })
        }
        _ => None,
    };
    Ok((model, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::encode_checkpoint;

    #[test]
    fn save_load_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let cfg = ScorerConfig {
            input_hw: (8, 8),
            backbone_channels: vec![2],
            ..ScorerConfig::default()
        };
        let m = ScorerNet::<f32>::new(cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let mut state = TrainState::fresh(&m);
        state.epochs_done = 3;
        state.optimizer.t = 9;
        state.optimizer.m[0][0] = 0.125;
        save_model(&path, &m, Some(&state)).unwrap();
        let (back, st) = load_model(&path).unwrap();
        let SavedModel::Scorer(back) = back else { panic!("wrong kind") };
        assert_eq!(encode_checkpoint(back.params()), encode_checkpoint(m.params()));
        assert_eq!(st.unwrap(), state);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let small = ScorerConfig {
            input_hw: (8, 8),
            backbone_channels: vec![2],
            ..ScorerConfig::default()
        };
        let m = ScorerNet::<f32>::new(small, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        save_model(&path, &m, None).unwrap();
        let text = std::fs::read_to_string(companion_path(&path)).unwrap();
        std::fs::write(companion_path(&path), text.replace("scorer.channels = 2", "scorer.channels = 3")).unwrap();
        match load_model(&path) {
            Err(Error::Contract(msg)) => assert!(msg.contains("backbone.0.weight"), "{msg}"),
            Err(e) => panic!("{e}"),
            Ok(_) => panic!("loaded a mismatched checkpoint"),
        }
    }
}
