//! Scan-level metrics, the score-averaging ensemble, and per-method
//! report tables.

mod metrics;

pub use metrics::{auc, compute_metrics, ensemble_predict, report_csv, MethodRow, MetricsReport, REPORT_HEADER};

use rayon::prelude::*;

use crate::ccat::CcatModel;
use crate::data::{CtVolume, Label, SamplingSpec};
use crate::dwcc::{dwcc_classify, ScanDecision, SliceScorer};
use crate::error::{Error, Result};

/// A DWCC setup: scorer, slice window and significance level.
#[derive(Clone, Copy)]
pub struct DwccSetup<'a> {
    pub scorer: &'a dyn SliceScorer,
    pub sampling: SamplingSpec,
    pub alpha: f64,
}

/// Outputs of each available method for one scan.
#[derive(Clone, Debug)]
pub struct ScanPrediction {
    pub scan_id: String,
    pub truth: Option<Label>,
    pub dwcc: Option<ScanDecision>,
    pub ccat: Option<f64>,
}

impl ScanPrediction {
    pub fn ccat_label(&self) -> Option<Label> {
        self.ccat.map(|p| if p >= 0.5 { Label::Covid } else { Label::NonCovid })
    }

    pub fn ensemble(&self) -> Option<(Label, f64)> {
        Some(ensemble_predict(self.dwcc.as_ref()?.confidence, self.ccat?))
    }
}

/// Runs every supplied method on every volume. Volumes are processed in
/// parallel; output order follows input order.
pub fn predict_all(volumes: &[CtVolume], dwcc: Option<DwccSetup<'_>>, ccat: Option<&CcatModel<f32>>) -> Result<Vec<ScanPrediction>> {
    volumes
        .par_iter()
        .map(|v| {
            Ok(ScanPrediction {
                scan_id: v.id.clone(),
                truth: v.label,
                dwcc: dwcc
                    .map(|s| dwcc_classify(s.scorer, v, &s.sampling, s.alpha))
                    .transpose()?,
                ccat: ccat.map(|m| m.predict(v)).transpose()?,
            })
        })
        .collect()
}

fn row(method: &str, scored: Vec<(Label, Label, f64)>) -> Result<MethodRow> {
    let pairs: Vec<_> = scored.iter().map(|&(t, p, _)| (t, p)).collect();
    let ranked: Vec<_> = scored.iter().map(|&(t, _, s)| (t, s)).collect();
    Ok(MethodRow {
        method: method.to_string(),
        metrics: compute_metrics(&pairs)?,
        auc: auc(&ranked),
    })
}

/// One row per method that has outputs, in the order dwcc, ccat, ensemble.
pub fn summarize(predictions: &[ScanPrediction]) -> Result<Vec<MethodRow>> {
    let truth = |p: &ScanPrediction| {
        p.truth
            .ok_or_else(|| Error::Data(format!("scan `{}` has no label", p.scan_id)))
    };
    let mut rows = Vec::new();
    if predictions.iter().all(|p| p.dwcc.is_some()) {
        let s = predictions
            .iter()
            .map(|p| {
                let d = p.dwcc.as_ref().unwrap();
                Ok((truth(p)?, d.label, d.confidence))
            })
            .collect::<Result<_>>()?;
        rows.push(row("dwcc", s)?);
    }
    if predictions.iter().all(|p| p.ccat.is_some()) {
        let s = predictions
            .iter()
            .map(|p| Ok((truth(p)?, p.ccat_label().unwrap(), p.ccat.unwrap())))
            .collect::<Result<_>>()?;
        rows.push(row("ccat", s)?);
    }
    if predictions.iter().all(|p| p.ensemble().is_some()) {
        let s = predictions
            .iter()
            .map(|p| {
                let (l, s) = p.ensemble().unwrap();
                Ok((truth(p)?, l, s))
            })
            .collect::<Result<_>>()?;
        rows.push(row("ensemble", s)?);
    }
    Ok(rows)
}

/// [`predict_all`] followed by [`summarize`].
pub fn evaluate_suite(volumes: &[CtVolume], dwcc: Option<DwccSetup<'_>>, ccat: Option<&CcatModel<f32>>) -> Result<Vec<MethodRow>> {
    if volumes.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    summarize(&predict_all(volumes, dwcc, ccat)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dwcc::{ConstantScorer, DEFAULT_ALPHA};

    #[test]
    fn single_correct_scan() {
        let v = CtVolume::new("a", (10, 4, 4), vec![0.3; 160], Some(Label::Covid)).unwrap();
        let scorer = ConstantScorer(0.9);
        let setup = DwccSetup {
            scorer: &scorer,
            sampling: SamplingSpec::center(0.5),
            alpha: DEFAULT_ALPHA,
        };
        let rows = evaluate_suite(&[v], Some(setup), None).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].method, "dwcc");
        let m = rows[0].metrics;
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.confusion, [[0, 0], [0, 1]]);
    }

    #[test]
    fn unlabeled_scan_is_error() {
        let v = CtVolume::new("a", (10, 4, 4), vec![0.3; 160], None).unwrap();
        let scorer = ConstantScorer(0.9);
        let setup = DwccSetup {
            scorer: &scorer,
            sampling: SamplingSpec::center(0.5),
            alpha: DEFAULT_ALPHA,
        };
        assert!(matches!(evaluate_suite(&[v], Some(setup), None), Err(Error::Data(_))));
    }
}
