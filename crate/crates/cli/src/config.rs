//! Run configuration: one `key = value` file covering data paths, sampling,
//! augmentation, both model architectures and both training recipes.

use std::path::{Path, PathBuf};

use ctscan_core::ccat::CcatConfig;
use ctscan_core::config::KeyValues;
use ctscan_core::data::AugmentationSpec;
use ctscan_core::dwcc::ScorerConfig;
use ctscan_core::experiment::{CcatRecipe, ScorerRecipe};
use ctscan_core::train::TrainConfig;
use ctscan_core::{Error, Result};

/// Which scans `eval` reports on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSplit {
    Val,
    All,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub report: Option<PathBuf>,
    /// Scorer checkpoint whose backbone initializes CCAT training.
    pub backbone: Option<PathBuf>,
    pub method: Option<String>,
    pub val_fraction: f64,
    pub eval_split: EvalSplit,
    pub scorer: ScorerRecipe,
    pub ccat: CcatRecipe,
}

/// Relative paths are taken from the config file's directory.
fn resolve(base: &Path, p: String) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let kv = KeyValues::read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_kv(kv, base)
    }

    pub fn from_kv(mut kv: KeyValues, base: &Path) -> Result<Self> {
        let data_dir = kv
            .take::<String>("paths.data")?
            .map(|p| resolve(base, p))
            .ok_or_else(|| Error::Config("missing required key `paths.data`".into()))?;
        let checkpoint_dir = resolve(base, kv.take_or("paths.checkpoints", "runs".to_string())?);
        let report = kv.take::<String>("paths.report")?.map(|p| resolve(base, p));
        let backbone = kv.take::<String>("paths.backbone")?.map(|p| resolve(base, p));
        let method = kv.take("method")?;
        let val_fraction = kv.take_or("data.val_fraction", 0.2)?;
        let eval_split = match kv.take::<String>("eval.split")?.as_deref() {
            None | Some("val") => EvalSplit::Val,
            Some("all") => EvalSplit::All,
            Some(other) => return Err(Error::Config(format!("eval.split: expected `val` or `all`, got `{other}`"))),
        };

        let dr = ScorerRecipe::default();
        let alpha = kv.take_or("dwcc.alpha", dr.alpha)?;
        let eval_fraction = kv.take_or("dwcc.fraction", dr.eval_fraction)?;
        let train_fraction = kv.take_or("dwcc.train_fraction", dr.train_fraction)?;
        let augmentation = AugmentationSpec::from_kv(kv.section("augment"))?;
        let scorer = ScorerRecipe {
            model: ScorerConfig::from_kv(kv.section("scorer"))?,
            train: TrainConfig::from_kv(kv.section("train.scorer"), TrainConfig::slices())?,
            train_fraction,
            eval_fraction,
            alpha,
            augmentation: augmentation.clone(),
        };
        let ccat = CcatRecipe {
            model: CcatConfig::from_kv(kv.section("ccat"))?,
            train: TrainConfig::from_kv(kv.section("train.ccat"), TrainConfig::scans())?,
            augmentation,
        };
        kv.finish()?;

        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::Config(format!("data.val_fraction must lie in [0, 1), got {val_fraction}")));
        }
        if !(alpha > 0.0 && alpha <= 0.5) {
            return Err(Error::Config(format!("dwcc.alpha must lie in (0, 0.5], got {alpha}")));
        }
        for (key, f) in [("dwcc.fraction", eval_fraction), ("dwcc.train_fraction", train_fraction)] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("{key} must lie in (0, 1], got {f}")));
            }
        }
        if let Some(b) = &backbone {
            if !b.is_file() {
                return Err(Error::Config(format!("paths.backbone: {} does not exist", b.display())));
            }
        }
        Ok(RunConfig {
            data_dir,
            checkpoint_dir,
            report,
            backbone,
            method,
            val_fraction,
            eval_split,
            scorer,
            ccat,
        })
    }
}
