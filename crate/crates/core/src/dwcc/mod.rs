//! Scan decisions from per-slice evidence: score the central slices, turn
//! each probability into a signed difference, drop outliers, and run a
//! one-sided Wilcoxon signed-rank test.

mod decision;
mod outliers;
mod scorer;
mod scores;
mod wilcoxon;

pub use decision::{decide_scan, ScanDecision, DEFAULT_ALPHA};
pub use outliers::{remove_outliers, MIN_KEPT};
pub use scorer::{ConstantScorer, ScorerConfig, ScorerNet, SliceScorer};
pub use scores::{append_decision, paired_differences, SliceScoreSet};
pub use wilcoxon::{
    doubled_signed_ranks, exact_null_counts, wilcoxon_signed_rank, wilcoxon_signed_rank_with, Alternative, Direction,
    Method, MethodChoice, WilcoxonResult, EXACT_MAX_N,
};

use crate::data::{center_fraction_indices, centered_strided, CtVolume, SamplingMode, SamplingSpec};
use crate::error::Result;

/// Every intermediate of one DWCC run.
#[derive(Clone, Debug)]
pub struct DwccOutcome {
    pub scores: SliceScoreSet,
    pub differences: Vec<f64>,
    pub kept: Vec<f64>,
    pub test: WilcoxonResult,
    pub decision: ScanDecision,
}

/// Slice indices a DWCC run looks at. Strided mode uses the centered
/// window with repeated indices collapsed.
pub fn selected_slices(depth: usize, spec: &SamplingSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    Ok(match spec.mode {
        SamplingMode::CenterFraction { fraction } => center_fraction_indices(depth, fraction)?.collect(),
        SamplingMode::Strided { slices, stride } => {
            let mut idx = centered_strided(depth, slices, stride);
            idx.dedup();
            idx
        }
    })
}

pub fn score_slices(scorer: &dyn SliceScorer, volume: &CtVolume, spec: &SamplingSpec) -> Result<SliceScoreSet> {
    let hw = (volume.height(), volume.width());
    let entries = selected_slices(volume.depth(), spec)?
        .into_iter()
        .map(|i| Ok((i, scorer.score(volume.slice(i), hw)?.clamp(0.0, 1.0))))
        .collect::<Result<Vec<_>>>()?;
    SliceScoreSet::new(volume.id.clone(), entries)
}

pub fn dwcc_from_scores(scores: SliceScoreSet, alpha: f64) -> DwccOutcome {
    let differences = paired_differences(&scores);
    let kept = remove_outliers(&differences);
    let test = wilcoxon_signed_rank(&kept, Alternative::Greater);
    let decision = decide_scan(&scores.scan_id, &test, kept.len(), alpha);
    DwccOutcome {
        scores,
        differences,
        kept,
        test,
        decision,
    }
}

pub fn dwcc_analyze(scorer: &dyn SliceScorer, volume: &CtVolume, spec: &SamplingSpec, alpha: f64) -> Result<DwccOutcome> {
    Ok(dwcc_from_scores(score_slices(scorer, volume, spec)?, alpha))
}

pub fn dwcc_classify(scorer: &dyn SliceScorer, volume: &CtVolume, spec: &SamplingSpec, alpha: f64) -> Result<ScanDecision> {
    Ok(dwcc_analyze(scorer, volume, spec, alpha)?.decision)
}
