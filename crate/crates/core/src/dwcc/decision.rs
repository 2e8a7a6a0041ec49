use super::wilcoxon::{Direction, Method, WilcoxonResult};
use crate::data::Label;

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Scan-level DWCC output.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanDecision {
    pub scan_id: String,
    pub label: Label,
    /// `1 − P(W+ ≥ observed)`; 0.5 when no slice carries evidence.
    pub confidence: f64,
    /// One-sided p-value for "median difference > 0".
    pub p_value: f64,
    pub n_slices_used: usize,
    pub method: Method,
    pub direction: Direction,
    pub alpha: f64,
    /// `p_value < alpha`.
    pub significant: bool,
}

impl ScanDecision {
    /// `label=… q=… p=… n=… method=…`
    pub fn report_fields(&self) -> String {
        format!(
            "label={} q={} p={} n={} method={}",
            self.label, self.confidence, self.p_value, self.n_slices_used, self.method
        )
    }
}

/// Labels by the sign of `W+ − W−` (ties are negative) and reports the
/// one-sided evidence for a positive median as the confidence.
pub fn decide_scan(scan_id: &str, result: &WilcoxonResult, n_slices_used: usize, alpha: f64) -> ScanDecision {
    assert!(alpha > 0.0 && alpha <= 0.5, "alpha must lie in (0, 0.5]");
    let label = if result.w_plus > result.w_minus {
        Label::Covid
    } else {
        Label::NonCovid
    };
    let confidence = if result.n_eff == 0 { 0.5 } else { 1.0 - result.p_greater };
    ScanDecision {
        scan_id: scan_id.to_string(),
        label,
        confidence,
        p_value: result.p_greater,
        n_slices_used,
        method: result.method,
        direction: result.direction,
        alpha,
        significant: result.p_greater < alpha,
    }
}

#[cfg(test)]
mod tests {
    use super::super::wilcoxon::{wilcoxon_signed_rank, Alternative};
    use super::*;

    #[test]
    fn all_positive() {
        let r = wilcoxon_signed_rank(&[0.2, 0.4, 0.6, 0.8, 1.0], Alternative::Greater);
        let d = decide_scan("s", &r, 5, DEFAULT_ALPHA);
        assert_eq!(d.label, Label::Covid);
        assert_eq!(d.confidence, 1.0 - 1.0 / 32.0);
        assert!(d.significant);
    }

    #[test]
    fn all_negative() {
        let r = wilcoxon_signed_rank(&[-0.2, -0.4, -0.6, -0.8, -1.0], Alternative::Greater);
        let d = decide_scan("s", &r, 5, DEFAULT_ALPHA);
        assert_eq!(d.label, Label::NonCovid);
        // P(W+ ≥ 0) = 1 under the null
        assert_eq!(d.p_value, 1.0);
        assert_eq!(d.confidence, 0.0);
        assert_eq!(r.p_less, 1.0 / 32.0);
    }

    #[test]
    fn no_evidence() {
        let r = wilcoxon_signed_rank(&[0.0, 0.0, 0.0], Alternative::Greater);
        let d = decide_scan("s", &r, 3, DEFAULT_ALPHA);
        assert_eq!(d.label, Label::NonCovid);
        assert_eq!(d.confidence, 0.5);
        assert_eq!(d.direction, Direction::Tied);
    }

    #[test]
    fn balanced_is_negative() {
        let r = wilcoxon_signed_rank(&[1.0, -1.0], Alternative::Greater);
        let d = decide_scan("s", &r, 2, DEFAULT_ALPHA);
        assert_eq!(d.label, Label::NonCovid);
        assert!(d.confidence < 0.5);
    }
}
