use std::fmt::Write as _;

use crate::data::Label;
use crate::error::{Error, Result};

/// Confusion matrix (rows = truth, columns = prediction, index 0 =
/// non-COVID) and the macro-averaged scores derived from it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub confusion: [[usize; 2]; 2],
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_confusion(confusion: [[usize; 2]; 2]) -> Result<Self> {
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::Data("metrics need at least one prediction".into()));
        }
        let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
        for (c, row) in confusion.iter().enumerate() {
            let tp = row[c];
            let prec = ratio(tp, confusion[0][c] + confusion[1][c]);
            let rec = ratio(tp, row[0] + row[1]);
            let f1 = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
            p += prec / 2.0;
            r += rec / 2.0;
            f += f1 / 2.0;
        }
        Ok(MetricsReport {
            confusion,
            accuracy: ratio(confusion[0][0] + confusion[1][1], total),
            macro_precision: p,
            macro_recall: r,
            macro_f1: f,
        })
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    /// `acc,macro_p,macro_r,macro_f1` to four decimals.
    pub fn csv_fields(&self) -> String {
        format!(
            "{:.4},{:.4},{:.4},{:.4}",
            self.accuracy, self.macro_precision, self.macro_recall, self.macro_f1
        )
    }
}

/// Metrics over `(truth, prediction)` pairs.
pub fn compute_metrics(pairs: &[(Label, Label)]) -> Result<MetricsReport> {
    let mut confusion = [[0usize; 2]; 2];
    for &(t, p) in pairs {
        confusion[t.index()][p.index()] += 1;
    }
    MetricsReport::from_confusion(confusion)
}

/// Area under the ROC curve as the Mann-Whitney probability that a COVID
/// scan outscores a non-COVID one, ties counted half. `None` unless both
/// classes are present.
pub fn auc(scored: &[(Label, f64)]) -> Option<f64> {
    let mut sorted: Vec<(f64, Label)> = scored.iter().map(|&(l, s)| (s, l)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_pos = sorted.iter().filter(|e| e.1 == Label::Covid).count();
    let n_neg = sorted.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let midrank = (i + j + 1) as f64 / 2.0;
        rank_sum += midrank * sorted[i..j].iter().filter(|e| e.1 == Label::Covid).count() as f64;
        i = j;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Mean of the DWCC confidence and the CCAT probability; COVID-19 when the
/// mean reaches one half.
pub fn ensemble_predict(q_dwcc: f64, p_ccat: f64) -> (Label, f64) {
    let score = (q_dwcc + p_ccat) / 2.0;
    (if score >= 0.5 { Label::Covid } else { Label::NonCovid }, score)
}

/// One row of a report table.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodRow {
    pub method: String,
    pub metrics: MetricsReport,
    pub auc: Option<f64>,
}

pub const REPORT_HEADER: &str = "method,acc,macro_p,macro_r,macro_f1";

/// CSV report with confusion matrices appended as `#` comments.
pub fn report_csv(rows: &[MethodRow]) -> String {
    let mut s = format!("{REPORT_HEADER}\n");
    for r in rows {
        writeln!(s, "{},{}", r.method, r.metrics.csv_fields()).unwrap();
    }
    for r in rows {
        let [[tn, fp], [fn_, tp]] = r.metrics.confusion;
        writeln!(s, "# {} confusion (rows=truth non-covid,covid; cols=pred): {tn} {fp} / {fn_} {tp}", r.method).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Covid as C, NonCovid as N};

    #[test]
    fn perfect() {
        let m = compute_metrics(&[(C, C), (N, N), (C, C)]).unwrap();
        assert_eq!((m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_is_error() {
        assert!(compute_metrics(&[]).is_err());
    }

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&[(C, 0.9), (N, 0.1)]), Some(1.0));
        assert_eq!(auc(&[(C, 0.1), (N, 0.9)]), Some(0.0));
        assert_eq!(auc(&[(C, 0.5), (N, 0.5)]), Some(0.5));
        assert_eq!(auc(&[(C, 0.5), (C, 0.7)]), None);
        // 2 positives, 2 negatives; pairs won: (0.8>0.3),(0.8>0.6),(0.4>0.3) = 3 of 4.
        assert_eq!(auc(&[(C, 0.8), (C, 0.4), (N, 0.3), (N, 0.6)]), Some(0.75));
    }

    #[test]
    fn ensemble_examples() {
        assert_eq!(ensemble_predict(1.0, 1.0), (C, 1.0));
        let (l, s) = ensemble_predict(0.2, 0.6);
        assert_eq!(l, N);
        assert!((s - 0.4).abs() < 1e-15);
        assert_eq!(ensemble_predict(0.4, 0.6), (C, 0.5));
    }

    #[test]
    fn csv_layout() {
        let m = compute_metrics(&[(C, C), (N, C)]).unwrap();
        let text = report_csv(&[MethodRow {
            method: "ccat".into(),
            metrics: m,
            auc: None,
        }]);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(REPORT_HEADER));
        assert_eq!(lines.next(), Some("ccat,0.5000,0.2500,0.5000,0.3333"));
        assert!(lines.next().unwrap().starts_with("# ccat confusion"));
    }
}
