//! Reproducible end-to-end runs on synthetic scans: dataset generation,
//! training both pipelines, and the slice-fraction and head-count sweeps.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::artifact::{save_model, Persist};
use crate::ccat::{CcatConfig, CcatModel};
use crate::data::{synth_volume, AugmentationSpec, CtVolume, Label, SamplingSpec, MIN_SYNTH_DEPTH};
use crate::dwcc::{ScorerConfig, ScorerNet, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::eval::{evaluate_suite, DwccSetup, MethodRow, MetricsReport};
use crate::nn::Model;
use crate::seed::sub_seed;
use crate::train::{train, EpochLog, Observer, ScanSet, SliceSet, TrainConfig, TrainState, EPOCH_LOG_HEADER};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n_scans: usize,
    pub depth: usize,
    pub hw: (usize, usize),
    pub covid_frac: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_scans < 2 {
            return Err(Error::Parameter("need at least 2 scans".into()));
        }
        if !(self.covid_frac > 0.0 && self.covid_frac < 1.0) {
            return Err(Error::Parameter(format!("covid fraction must lie in (0, 1), got {}", self.covid_frac)));
        }
        if self.depth < MIN_SYNTH_DEPTH {
            return Err(Error::Parameter(format!(
                "synthetic depth must be ≥ {MIN_SYNTH_DEPTH}, got {}",
                self.depth
            )));
        }
        if self.hw.0 == 0 || self.hw.1 == 0 {
            return Err(Error::Parameter("slice size must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn n_covid(&self) -> usize {
        (self.covid_frac * self.n_scans as f64).ceil() as usize
    }
}

/// `⌈r·N⌉` COVID scans and the rest non-COVID, in seeded shuffled order,
/// with ids `scan_0000`, `scan_0001`, ….
pub fn synth_dataset(spec: &SynthSpec) -> Result<Vec<CtVolume>> {
    spec.validate()?;
    let mut labels: Vec<Label> = (0..spec.n_scans)
        .map(|i| if i < spec.n_covid() { Label::Covid } else { Label::NonCovid })
        .collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(spec.seed, &[0])));
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(spec.seed, &[1, i as u64]));
            let mut v = synth_volume(label, (spec.depth, spec.hw.0, spec.hw.1), &mut rng)?;
            v.id = format!("scan_{i:04}");
            Ok(v)
        })
        .collect()
}

/// Slice scorer training settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorerRecipe {
    pub model: ScorerConfig,
    pub train: TrainConfig,
    /// Central window of each scan used for training slices.
    pub train_fraction: f64,
    /// Central window used when the scorer feeds the Wilcoxon test.
    pub eval_fraction: f64,
    pub alpha: f64,
    pub augmentation: AugmentationSpec,
}

impl Default for ScorerRecipe {
    fn default() -> Self {
        ScorerRecipe {
            model: ScorerConfig::default(),
            train: TrainConfig::slices(),
            train_fraction: 0.4,
            eval_fraction: 0.4,
            alpha: DEFAULT_ALPHA,
            augmentation: AugmentationSpec::training(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CcatRecipe {
    pub model: CcatConfig,
    pub train: TrainConfig,
    pub augmentation: AugmentationSpec,
}

impl Default for CcatRecipe {
    fn default() -> Self {
        CcatRecipe {
            model: CcatConfig::default(),
            train: TrainConfig::scans(),
            augmentation: AugmentationSpec::training(),
        }
    }
}

/// Where a run writes its epoch log and checkpoints.
#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub checkpoint: Option<PathBuf>,
    pub epoch_log: Option<PathBuf>,
    /// Print each epoch row to stderr as it finishes.
    pub echo: bool,
}

type Validator<'a, M> = Box<dyn Fn(&M) -> Result<MetricsReport> + 'a>;

struct RunObserver<'a, M> {
    validate: Option<Validator<'a, M>>,
    out: &'a RunOutput,
    log_text: String,
    cfg: &'a TrainConfig,
}

impl<M: Persist> Observer<M, f32> for RunObserver<'_, M> {
    fn validate(&mut self, model: &M) -> Result<Option<MetricsReport>> {
        self.validate.as_ref().map(|f| f(model)).transpose()
    }

    fn epoch_end(&mut self, log: &EpochLog, model: &M, state: &TrainState<f32>) -> Result<()> {
        self.log_text.push_str(&log.csv_row());
        self.log_text.push('\n');
        if self.out.echo {
            eprintln!("{}", log.csv_row());
        }
        if let Some(path) = &self.out.epoch_log {
            std::fs::write(path, &self.log_text).map_err(|e| Error::io(path, e))?;
        }
        let done = state.epochs_done;
        let due = done == self.cfg.epochs || (self.cfg.checkpoint_every > 0 && done.is_multiple_of(self.cfg.checkpoint_every));
        if let (Some(path), true) = (&self.out.checkpoint, due) {
            save_model(path, model, Some(state))?;
        }
        Ok(())
    }
}

fn observer<'a, M>(out: &'a RunOutput, cfg: &'a TrainConfig, validate: Option<Validator<'a, M>>) -> RunObserver<'a, M> {
    RunObserver {
        validate,
        out,
        log_text: format!("{EPOCH_LOG_HEADER}\n"),
        cfg,
    }
}

fn single_row(rows: Vec<MethodRow>) -> MetricsReport {
    rows.into_iter().next().expect("one method evaluated").metrics
}

/// DWCC validation metrics for a scorer.
pub fn dwcc_metrics(scorer: &ScorerNet<f32>, val: &[CtVolume], fraction: f64, alpha: f64) -> Result<MetricsReport> {
    let setup = DwccSetup {
        scorer,
        sampling: SamplingSpec::center(fraction),
        alpha,
    };
    Ok(single_row(evaluate_suite(val, Some(setup), None)?))
}

pub fn ccat_metrics(model: &CcatModel<f32>, val: &[CtVolume]) -> Result<MetricsReport> {
    Ok(single_row(evaluate_suite(val, None, Some(model))?))
}

/// Trains (or resumes) a slice scorer. `val` enables per-epoch DWCC
/// validation.
pub fn train_scorer(
    model: &mut ScorerNet<f32>,
    state: &mut TrainState<f32>,
    train_set: &[CtVolume],
    val: Option<&[CtVolume]>,
    recipe: &ScorerRecipe,
    out: &RunOutput,
) -> Result<Vec<EpochLog>> {
    let data = SliceSet::new(train_set, recipe.train_fraction, model.config.input_hw, recipe.augmentation.clone())?;
    let validate = val.map(|v| {
        let (f, a) = (recipe.eval_fraction, recipe.alpha);
        Box::new(move |m: &ScorerNet<f32>| dwcc_metrics(m, v, f, a)) as Box<dyn Fn(&ScorerNet<f32>) -> Result<MetricsReport>>
    });
    let mut obs = observer(out, &recipe.train, validate);
    train(model, &data, &recipe.train, state, &mut obs)
}

pub fn train_ccat(
    model: &mut CcatModel<f32>,
    state: &mut TrainState<f32>,
    train_set: &[CtVolume],
    val: Option<&[CtVolume]>,
    recipe: &CcatRecipe,
    out: &RunOutput,
) -> Result<Vec<EpochLog>> {
    let c = &model.config;
    let data = ScanSet::new(train_set, c.slices, c.slice_stride, c.input_hw, recipe.augmentation.clone())?;
    let validate = val.map(|v| {
        Box::new(move |m: &CcatModel<f32>| ccat_metrics(m, v)) as Box<dyn Fn(&CcatModel<f32>) -> Result<MetricsReport>>
    });
    let mut obs = observer(out, &recipe.train, validate);
    train(model, &data, &recipe.train, state, &mut obs)
}

/// Fresh scorer trained from scratch with the recipe's seed.
pub fn fit_scorer(train_set: &[CtVolume], val: Option<&[CtVolume]>, recipe: &ScorerRecipe, out: &RunOutput) -> Result<(ScorerNet<f32>, Vec<EpochLog>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(recipe.train.seed, &[u64::MAX]));
    let mut model = ScorerNet::new(recipe.model.clone(), &mut rng)?;
    let mut state = TrainState::fresh(&model);
    let logs = train_scorer(&mut model, &mut state, train_set, val, recipe, out)?;
    Ok((model, logs))
}

/// Fresh CCAT model. With `backbone` set, the convolutional stem starts
/// from a trained slice scorer instead of random weights.
pub fn fit_ccat(
    train_set: &[CtVolume],
    val: Option<&[CtVolume]>,
    recipe: &CcatRecipe,
    backbone: Option<&ScorerNet<f32>>,
    out: &RunOutput,
) -> Result<(CcatModel<f32>, Vec<EpochLog>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(recipe.train.seed, &[u64::MAX]));
    let mut model = CcatModel::new(recipe.model.clone(), &mut rng)?;
    if let Some(scorer) = backbone {
        model.adopt_backbone(scorer.params())?;
    }
    let mut state = TrainState::fresh(&model);
    let logs = train_ccat(&mut model, &mut state, train_set, val, recipe, out)?;
    Ok((model, logs))
}

/// One sweep point.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub metrics: MetricsReport,
    pub auc: Option<f64>,
}

pub const SWEEP_HEADER: &str = "value,acc,macro_p,macro_r,macro_f1,auc";

impl SweepRow {
    pub fn csv_row(&self) -> String {
        let auc = self.auc.map(|a| format!("{a:.4}")).unwrap_or_default();
        format!("{},{},{auc}", self.value, self.metrics.csv_fields())
    }
}

/// DWCC accuracy as a function of the central slice fraction, for a fixed
/// trained scorer.
pub fn fraction_sweep(scorer: &ScorerNet<f32>, val: &[CtVolume], fractions: &[f64], alpha: f64) -> Result<Vec<SweepRow>> {
    if fractions.is_empty() {
        return Err(Error::Parameter("sweep needs at least one value".into()));
    }
    fractions
        .iter()
        .map(|&f| {
            let setup = DwccSetup {
                scorer,
                sampling: SamplingSpec::center(f),
                alpha,
            };
            SamplingSpec::center(f).validate()?;
            let row = evaluate_suite(val, Some(setup), None)?.remove(0);
            Ok(SweepRow {
                value: f,
                metrics: row.metrics,
                auc: row.auc,
            })
        })
        .collect()
}

/// CCAT trained once per head count (0 = gMLP), every run starting from
/// the same backbone.
pub fn heads_sweep(
    train_set: &[CtVolume],
    val: &[CtVolume],
    recipe: &CcatRecipe,
    backbone: Option<&ScorerNet<f32>>,
    heads: &[usize],
) -> Result<Vec<SweepRow>> {
    if heads.is_empty() {
        return Err(Error::Parameter("sweep needs at least one value".into()));
    }
    heads
        .iter()
        .map(|&h| {
            let r = CcatRecipe {
                model: CcatConfig {
                    heads: h,
                    ..recipe.model.clone()
                },
                ..recipe.clone()
            };
            let (model, _) = fit_ccat(train_set, None, &r, backbone, &RunOutput::default())?;
            let row = evaluate_suite(val, None, Some(&model))?.remove(0);
            Ok(SweepRow {
                value: h as f64,
                metrics: row.metrics,
                auc: row.auc,
            })
        })
        .collect()
}
