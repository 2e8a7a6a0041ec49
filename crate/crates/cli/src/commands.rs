use std::io::Write;
use std::path::{Path, PathBuf};

use ctscan_core::artifact::{load_model, SavedModel};
use ctscan_core::ccat::{CcatConfig, CcatModel};
use ctscan_core::config::KeyValues;
use ctscan_core::data::{load_dataset, load_volume, save_dataset, split_stratified, CtVolume, SamplingSpec, SourceKind};
use ctscan_core::dwcc::{dwcc_classify, dwcc_from_scores, ScorerNet, SliceScoreSet};
use ctscan_core::eval::{ensemble_predict, evaluate_suite, report_csv, DwccSetup};
use ctscan_core::experiment::{
    fit_ccat, fit_scorer, fraction_sweep, heads_sweep, synth_dataset, RunOutput, SweepRow, SynthSpec, SWEEP_HEADER,
};
use ctscan_core::{Error, Result};

use crate::config::{EvalSplit, RunConfig};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
}

pub fn parse_size(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Parameter(format!("size must look like HxW, got `{s}`"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((h.trim().parse().map_err(|_| bad())?, w.trim().parse().map_err(|_| bad())?))
}

pub fn synth(out_dir: &Path, spec: &SynthSpec, out: &mut dyn Write) -> Result<()> {
    let volumes = synth_dataset(spec)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    save_dataset(out_dir, &volumes)?;
    emit(
        out,
        &format!(
            "wrote {} scans ({} covid) to {}\n",
            volumes.len(),
            spec.n_covid(),
            out_dir.display()
        ),
    )
}

/// Train/validation split of the configured data directory.
fn split(cfg: &RunConfig) -> Result<(Vec<CtVolume>, Vec<CtVolume>)> {
    let all = load_dataset(&cfg.data_dir)?;
    if cfg.val_fraction == 0.0 {
        return Ok((all, Vec::new()));
    }
    split_stratified(all, cfg.val_fraction)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMethod {
    DwccScorer,
    Ccat,
}

impl TrainMethod {
    fn stem(self) -> &'static str {
        match self {
            TrainMethod::DwccScorer => "scorer",
            TrainMethod::Ccat => "ccat",
        }
    }
}

pub fn checkpoint_path(cfg: &RunConfig, method: TrainMethod) -> PathBuf {
    cfg.checkpoint_dir.join(format!("{}.ckpt", method.stem()))
}

pub fn epoch_log_path(cfg: &RunConfig, method: TrainMethod) -> PathBuf {
    cfg.checkpoint_dir.join(format!("{}_epochs.csv", method.stem()))
}

fn load_scorer(path: &Path) -> Result<ScorerNet<f32>> {
    match load_model(path)?.0 {
        SavedModel::Scorer(m) => Ok(m),
        SavedModel::Ccat(_) => Err(Error::Contract(format!("{} holds a ccat model, expected a scorer", path.display()))),
    }
}

pub fn train(cfg: &RunConfig, method: TrainMethod, out: &mut dyn Write) -> Result<()> {
    // Everything that can fail on input is checked before any output exists.
    let (train_set, val) = split(cfg)?;
    let backbone = match (method, &cfg.backbone) {
        (TrainMethod::Ccat, Some(p)) => Some(load_scorer(p)?),
        _ => None,
    };
    let tc = match method {
        TrainMethod::DwccScorer => &cfg.scorer.train,
        TrainMethod::Ccat => &cfg.ccat.train,
    };
    emit(
        out,
        &format!(
            "method={} {} train={} val={}\n",
            method.stem(),
            tc.header(),
            train_set.len(),
            val.len()
        ),
    )?;
    std::fs::create_dir_all(&cfg.checkpoint_dir).map_err(io_err(&cfg.checkpoint_dir))?;
    let run = RunOutput {
        checkpoint: Some(checkpoint_path(cfg, method)),
        epoch_log: Some(epoch_log_path(cfg, method)),
        echo: true,
    };
    let val = (!val.is_empty()).then_some(&val[..]);
    let logs = match method {
        TrainMethod::DwccScorer => fit_scorer(&train_set, val, &cfg.scorer, &run)?.1,
        TrainMethod::Ccat => fit_ccat(&train_set, val, &cfg.ccat, backbone.as_ref(), &run)?.1,
    };
    if let Some(last) = logs.last() {
        emit(out, &format!("{}\n", last.csv_row()))?;
    }
    emit(out, &format!("checkpoint={}\n", checkpoint_path(cfg, method).display()))
}

#[derive(Default)]
struct Loaded {
    scorer: Option<(PathBuf, ScorerNet<f32>)>,
    ccat: Option<(PathBuf, CcatModel<f32>)>,
}

fn load_checkpoints(paths: &[PathBuf]) -> Result<Loaded> {
    let mut loaded = Loaded::default();
    for p in paths {
        match load_model(p)?.0 {
            SavedModel::Scorer(m) => {
                if let Some((prev, _)) = loaded.scorer.replace((p.clone(), m)) {
                    return Err(Error::Contract(format!("two scorer checkpoints: {} and {}", prev.display(), p.display())));
                }
            }
            SavedModel::Ccat(m) => {
                if let Some((prev, _)) = loaded.ccat.replace((p.clone(), m)) {
                    return Err(Error::Contract(format!("two ccat checkpoints: {} and {}", prev.display(), p.display())));
                }
            }
        }
    }
    Ok(loaded)
}

/// Lists every architecture key on which a checkpoint and the run config
/// disagree.
fn check_compatible(path: &Path, saved: KeyValues, configured: KeyValues) -> Result<()> {
    let (a, b) = (saved.to_text(), configured.to_text());
    if a == b {
        return Ok(());
    }
    let lines = |t: &str| t.lines().map(str::to_string).collect::<std::collections::BTreeSet<_>>();
    let (sa, sb) = (lines(&a), lines(&b));
    let diff: Vec<String> = sa
        .difference(&sb)
        .map(|l| format!("checkpoint has {l}"))
        .chain(sb.difference(&sa).map(|l| format!("config has {l}")))
        .collect();
    Err(Error::Contract(format!(
        "{} does not match the configured architecture: {}",
        path.display(),
        diff.join("; ")
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMethod {
    Dwcc,
    Ccat,
    Ensemble,
    All,
}

impl std::str::FromStr for EvalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dwcc" => Ok(EvalMethod::Dwcc),
            "ccat" => Ok(EvalMethod::Ccat),
            "ensemble" => Ok(EvalMethod::Ensemble),
            "all" => Ok(EvalMethod::All),
            _ => Err(Error::Parameter(format!("unknown method `{s}` (dwcc, ccat, ensemble, all)"))),
        }
    }
}

impl EvalMethod {
    fn needs(self) -> (bool, bool) {
        match self {
            EvalMethod::Dwcc => (true, false),
            EvalMethod::Ccat => (false, true),
            EvalMethod::Ensemble | EvalMethod::All => (true, true),
        }
    }
}

fn missing(what: &str, method: &str) -> Error {
    Error::Contract(format!("method {method} needs a {what} checkpoint (--checkpoint)"))
}

pub fn eval(cfg: &RunConfig, checkpoints: &[PathBuf], method: EvalMethod, out: &mut dyn Write) -> Result<()> {
    let loaded = load_checkpoints(checkpoints)?;
    let (need_scorer, need_ccat) = method.needs();
    let name = format!("{method:?}").to_lowercase();
    if need_scorer && loaded.scorer.is_none() {
        return Err(missing("scorer", &name));
    }
    if need_ccat && loaded.ccat.is_none() {
        return Err(missing("ccat", &name));
    }
    if let (true, Some((p, m))) = (need_scorer, &loaded.scorer) {
        check_compatible(p, m.config.to_kv(), cfg.scorer.model.to_kv())?;
    }
    if let (true, Some((p, m))) = (need_ccat, &loaded.ccat) {
        check_compatible(p, m.config.to_kv(), cfg.ccat.model.to_kv())?;
    }
    let scans = match cfg.eval_split {
        EvalSplit::Val => {
            let (_, val) = split(cfg)?;
            if val.is_empty() {
                return Err(Error::Config("data.val_fraction = 0 leaves nothing to evaluate; set eval.split = all".into()));
            }
            val
        }
        EvalSplit::All => load_dataset(&cfg.data_dir)?,
    };
    let dwcc = loaded.scorer.as_ref().filter(|_| need_scorer).map(|(_, m)| DwccSetup {
        scorer: m,
        sampling: SamplingSpec::center(cfg.scorer.eval_fraction),
        alpha: cfg.scorer.alpha,
    });
    let ccat = loaded.ccat.as_ref().filter(|_| need_ccat).map(|(_, m)| m);
    let mut rows = evaluate_suite(&scans, dwcc, ccat)?;
    if method == EvalMethod::Ensemble {
        rows.retain(|r| r.method == "ensemble");
    }
    let csv = report_csv(&rows);
    let report = cfg.report.clone().unwrap_or_else(|| cfg.checkpoint_dir.join("report.csv"));
    if let Some(dir) = report.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(&report, &csv).map_err(io_err(&report))?;
    emit(out, &csv)
}

pub struct PredictArgs {
    /// Optional only when `scores` alone drives a DWCC decision.
    pub scan: Option<PathBuf>,
    pub method: EvalMethod,
    pub checkpoints: Vec<PathBuf>,
    pub scores: Option<PathBuf>,
    pub fraction: f64,
    pub alpha: f64,
}

pub fn predict(args: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let loaded = load_checkpoints(&args.checkpoints)?;
    let name = format!("{:?}", args.method).to_lowercase();
    let (need_dwcc, need_ccat) = match args.method {
        EvalMethod::All => return Err(Error::Parameter("predict takes dwcc, ccat or ensemble".into())),
        m => m.needs(),
    };
    if need_dwcc && loaded.scorer.is_none() && args.scores.is_none() {
        return Err(missing("scorer", &name));
    }
    if need_ccat && loaded.ccat.is_none() {
        return Err(missing("ccat", &name));
    }
    // Precomputed scores stand in for the scorer and the scan alike.
    let volume = match (&args.scores, need_ccat) {
        (Some(_), false) => None,
        _ => {
            let scan = args
                .scan
                .as_ref()
                .ok_or_else(|| Error::Parameter("predict needs --scan".into()))?;
            if !scan.exists() {
                return Err(Error::Data(format!("scan {} does not exist", scan.display())));
            }
            Some(load_volume(scan, SourceKind::detect(scan))?)
        }
    };
    let decision = if !need_dwcc {
        None
    } else if let Some(path) = &args.scores {
        Some(dwcc_from_scores(SliceScoreSet::read(path)?, args.alpha).decision)
    } else {
        let (_, scorer) = loaded.scorer.as_ref().expect("checked above");
        let spec = SamplingSpec::center(args.fraction);
        spec.validate()?;
        Some(dwcc_classify(scorer, volume.as_ref().expect("scan loaded"), &spec, args.alpha)?)
    };
    let p = match (&loaded.ccat, need_ccat) {
        (Some((_, m)), true) => Some(m.predict(volume.as_ref().expect("scan loaded"))?),
        _ => None,
    };
    let (label, score) = match (&decision, p) {
        (Some(d), None) => (d.label, d.confidence),
        (None, Some(p)) => (if p >= 0.5 { ctscan_core::data::Label::Covid } else { ctscan_core::data::Label::NonCovid }, p),
        (Some(d), Some(p)) => ensemble_predict(d.confidence, p),
        (None, None) => unreachable!("some method is always selected"),
    };
    let mut text = format!("label={label} score={score}\n");
    if let Some(d) = &decision {
        text.push_str(&format!("p={} n={} method={}\n", d.p_value, d.n_slices_used, d.method));
    }
    emit(out, &text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Fraction,
    Heads,
}

pub fn sweep(cfg: &RunConfig, axis: SweepAxis, values: &[f64], scorer_ckpt: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Parameter("sweep needs at least one value".into()));
    }
    let rows: Vec<SweepRow> = match axis {
        SweepAxis::Fraction => {
            if let Some(f) = values.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
                return Err(Error::Parameter(format!("fraction {f} outside (0, 1]")));
            }
            let (train_set, val) = split(cfg)?;
            let scorer = match scorer_ckpt {
                Some(p) => load_scorer(p)?,
                None => fit_scorer(&train_set, None, &cfg.scorer, &RunOutput::default())?.0,
            };
            fraction_sweep(&scorer, &val, values, cfg.scorer.alpha)?
        }
        SweepAxis::Heads => {
            let heads = values
                .iter()
                .map(|&v| {
                    let h = v as usize;
                    if h as f64 != v {
                        return Err(Error::Parameter(format!("head count must be a whole number, got {v}")));
                    }
                    CcatConfig { heads: h, ..cfg.ccat.model.clone() }.validate()?;
                    Ok(h)
                })
                .collect::<Result<Vec<_>>>()?;
            let (train_set, val) = split(cfg)?;
            let backbone = match scorer_ckpt.or(cfg.backbone.as_deref()) {
                Some(p) => Some(load_scorer(p)?),
                None => None,
            };
            heads_sweep(&train_set, &val, &cfg.ccat, backbone.as_ref(), &heads)?
        }
    };
    let mut csv = format!("{SWEEP_HEADER}\n");
    for r in &rows {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    let name = match axis {
        SweepAxis::Fraction => "sweep_fraction.csv",
        SweepAxis::Heads => "sweep_heads.csv",
    };
    std::fs::create_dir_all(&cfg.checkpoint_dir).map_err(io_err(&cfg.checkpoint_dir))?;
    let path = cfg.checkpoint_dir.join(name);
    std::fs::write(&path, &csv).map_err(io_err(&path))?;
    emit(out, &csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(parse_size("64x48").unwrap(), (64, 48));
        assert_eq!(parse_size("8X8").unwrap(), (8, 8));
        assert!(parse_size("64").is_err());
        assert!(parse_size("ax4").is_err());
    }

    #[test]
    fn constant_scores_predict_non_covid() {
        let dir = tempfile::tempdir().unwrap();
        let scores = dir.path().join("s.txt");
        let set = SliceScoreSet::new("s", (0..10).map(|i| (i, 0.5)).collect()).unwrap();
        set.write(&scores).unwrap();
        let args = PredictArgs {
            scan: None,
            method: EvalMethod::Dwcc,
            checkpoints: vec![],
            scores: Some(scores),
            fraction: 0.4,
            alpha: 0.05,
        };
        let mut buf = Vec::new();
        predict(&args, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("label=non-covid score=0.5"));
        assert!(text.lines().nth(1).unwrap().starts_with("p="));
    }

    #[test]
    fn ensemble_names_missing_checkpoint() {
        let args = PredictArgs {
            scan: Some(PathBuf::from("x.ctv")),
            method: EvalMethod::Ensemble,
            checkpoints: vec![],
            scores: None,
            fraction: 0.4,
            alpha: 0.05,
        };
        let err = predict(&args, &mut Vec::new()).unwrap_err();
        assert!(err.to_string().contains("scorer"), "{err}");
    }
}
