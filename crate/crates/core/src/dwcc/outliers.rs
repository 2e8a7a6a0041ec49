/// Fewer survivors than this and the input is returned untouched.
pub const MIN_KEPT: usize = 5;

/// Linear-interpolation quantile of sorted data (`q ∈ [0, 1]`).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Tukey fences: keeps values inside `[Q1 - 1.5·IQR, Q3 + 1.5·IQR]`,
/// preserving input order.
pub fn remove_outliers(d: &[f64]) -> Vec<f64> {
    if d.is_empty() {
        return Vec::new();
    }
    let mut sorted = d.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let kept: Vec<f64> = d.iter().copied().filter(|v| (lo..=hi).contains(v)).collect();
    if kept.len() < MIN_KEPT {
        d.to_vec()
    } else {
        kept
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_values_unchanged() {
        let d = vec![0.3; 12];
        assert_eq!(remove_outliers(&d), d);
    }

    #[test]
    fn single_spike_removed() {
        let mut d = vec![0.1; 19];
        d.push(50.0);
        let kept = remove_outliers(&d);
        assert_eq!(kept, vec![0.1; 19]);
    }

    #[test]
    fn short_input_guarded() {
        let d = vec![0.0, 0.1, 100.0];
        assert_eq!(remove_outliers(&d), d);
    }

    #[test]
    fn quartiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.25), 1.75);
        assert_eq!(quantile(&s, 0.75), 3.25);
    }
}
