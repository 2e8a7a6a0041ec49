use std::fmt;

use statrs::distribution::{ContinuousCDF, Normal};

/// Largest effective sample size handled by exact enumeration.
pub const EXACT_MAX_N: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alternative {
    /// Median difference > 0.
    Greater,
    /// Median difference < 0.
    Less,
    TwoSided,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Exact,
    NormalApprox,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::NormalApprox => "normal_approx",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which way the signed ranks lean.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Positive,
    Negative,
    Tied,
}

/// How the null distribution is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodChoice {
    /// Exact for `n_eff ≤ 30`, normal approximation above.
    Auto,
    Exact,
    NormalApprox,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WilcoxonResult {
    pub w_plus: f64,
    pub w_minus: f64,
    /// Count of non-zero differences.
    pub n_eff: usize,
    /// p-value under the requested alternative.
    pub p_value: f64,
    /// One-sided tail `P(W+ ≥ observed)`.
    pub p_greater: f64,
    /// One-sided tail `P(W+ ≤ observed)`.
    pub p_less: f64,
    pub alternative: Alternative,
    pub method: Method,
    pub direction: Direction,
}

/// Ranks of `|d|` for the non-zero differences, ascending, with ties given
/// their midrank. Returned doubled so every rank is an integer.
pub fn doubled_signed_ranks(d: &[f64]) -> Vec<(u64, bool)> {
    let mut nz: Vec<(f64, bool)> = d.iter().filter(|&&v| v != 0.0).map(|&v| (v.abs(), v > 0.0)).collect();
    nz.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::with_capacity(nz.len());
    let mut i = 0;
    while i < nz.len() {
        let mut j = i;
        while j + 1 < nz.len() && nz[j + 1].0 == nz[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1, midrank (i + j + 2) / 2
        let doubled = (i + j + 2) as u64;
        out.extend(nz[i..=j].iter().map(|&(_, pos)| (doubled, pos)));
        i = j + 1;
    }
    out
}

/// Exact null distribution of doubled `W+`: `counts[s]` is the number of
/// sign assignments whose doubled positive rank sum equals `s`.
pub fn exact_null_counts(doubled_ranks: &[u64]) -> Vec<u64> {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

fn tie_groups(ranks: &[(u64, bool)]) -> Vec<usize> {
    let mut groups = Vec::new();
    let mut i = 0;
    while i < ranks.len() {
        let j = ranks[i..].iter().take_while(|r| r.0 == ranks[i].0).count();
        groups.push(j);
        i += j;
    }
    groups
}

pub fn wilcoxon_signed_rank(d: &[f64], alternative: Alternative) -> WilcoxonResult {
    wilcoxon_signed_rank_with(d, alternative, MethodChoice::Auto)
}

/// Wilcoxon signed-rank test of "median of `d` is zero". Exact zeros are
/// dropped before ranking.
pub fn wilcoxon_signed_rank_with(d: &[f64], alternative: Alternative, choice: MethodChoice) -> WilcoxonResult {
    assert!(d.iter().all(|v| v.is_finite()), "differences must be finite");
    let ranks = doubled_signed_ranks(d);
    let n = ranks.len();
    let pos2: u64 = ranks.iter().filter(|r| r.1).map(|r| r.0).sum();
    let neg2: u64 = ranks.iter().filter(|r| !r.1).map(|r| r.0).sum();
    let (w_plus, w_minus) = (pos2 as f64 / 2.0, neg2 as f64 / 2.0);
    let direction = match pos2.cmp(&neg2) {
        std::cmp::Ordering::Greater => Direction::Positive,
        std::cmp::Ordering::Less => Direction::Negative,
        std::cmp::Ordering::Equal => Direction::Tied,
    };
    let method = match choice {
        MethodChoice::Auto if n <= EXACT_MAX_N => Method::Exact,
        MethodChoice::Auto => Method::NormalApprox,
        MethodChoice::Exact => Method::Exact,
        MethodChoice::NormalApprox => Method::NormalApprox,
    };
    if n == 0 {
        return WilcoxonResult {
            w_plus,
            w_minus,
            n_eff: 0,
            p_value: 1.0,
            p_greater: 1.0,
            p_less: 1.0,
            alternative,
            method,
            direction: Direction::Tied,
        };
    }

    let (p_greater, p_less, p_two) = match method {
        Method::Exact => {
            let doubled: Vec<u64> = ranks.iter().map(|r| r.0).collect();
            let counts = exact_null_counts(&doubled);
            let all = 2f64.powi(n as i32);
            let obs = pos2 as usize;
            let upper: u64 = counts[obs..].iter().sum();
            let lower: u64 = counts[..=obs].iter().sum();
            let (pg, pl) = (upper as f64 / all, lower as f64 / all);
            (pg, pl, (2.0 * pg.min(pl)).min(1.0))
        }
        Method::NormalApprox => {
            let nf = n as f64;
            let mu = nf * (nf + 1.0) / 4.0;
            let ties: f64 = tie_groups(&ranks)
                .into_iter()
                .map(|t| {
                    let t = t as f64;
                    t * t * t - t
                })
                .sum();
            let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
            let sd = var.sqrt();
            let std_normal = Normal::new(0.0, 1.0).unwrap();
            let floor = |p: f64| p.clamp(f64::MIN_POSITIVE, 1.0);
            let pg = floor(std_normal.sf((w_plus - mu - 0.5) / sd));
            let pl = floor(std_normal.cdf((w_plus - mu + 0.5) / sd));
            let dev = ((w_plus - mu).abs() - 0.5).max(0.0);
            let p2 = floor((2.0 * std_normal.sf(dev / sd)).min(1.0));
            (pg, pl, p2)
        }
    };
    let p_value = match alternative {
        Alternative::Greater => p_greater,
        Alternative::Less => p_less,
        Alternative::TwoSided => p_two,
    };
    WilcoxonResult {
        w_plus,
        w_minus,
        n_eff: n,
        p_value,
        p_greater,
        p_less,
        alternative,
        method,
        direction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_positive_five() {
        let r = wilcoxon_signed_rank(&[0.1, 0.4, 0.2, 0.9, 0.3], Alternative::Greater);
        assert_eq!(r.w_minus, 0.0);
        assert_eq!(r.w_plus, 15.0);
        assert_eq!(r.p_value, 1.0 / 32.0);
        assert_eq!(r.method, Method::Exact);
    }

    #[test]
    fn worked_example() {
        let r = wilcoxon_signed_rank(&[1.2, -0.5, 0.3, 2.0, -0.1], Alternative::Greater);
        assert_eq!(r.w_plus, 11.0);
        assert_eq!(r.w_minus, 4.0);
        assert_eq!(r.p_value, 7.0 / 32.0);
        assert_eq!(r.direction, Direction::Positive);
    }

    #[test]
    fn zeros_are_dropped() {
        let r = wilcoxon_signed_rank(&[0.0, 0.0, 1.0], Alternative::Greater);
        assert_eq!(r.n_eff, 1);
        assert_eq!(r.w_plus, 1.0);
        assert_eq!(r.p_value, 0.5);

        let r = wilcoxon_signed_rank(&[0.0, 0.0], Alternative::TwoSided);
        assert_eq!((r.n_eff, r.p_value, r.direction), (0, 1.0, Direction::Tied));
    }

    #[test]
    fn midranks_for_ties() {
        let ranks = doubled_signed_ranks(&[-2.0, 1.0, 2.0, 2.0, 0.0]);
        // |d| sorted: 1 (rank 1), 2,2,2 (ranks 2..4, midrank 3)
        assert_eq!(ranks, vec![(2, true), (6, false), (6, true), (6, true)]);
    }

    #[test]
    fn null_counts_small() {
        // ranks 1,2,3 doubled: sums 0,2,4,6(×2),8,10,12
        let c = exact_null_counts(&[2, 4, 6]);
        assert_eq!(c.iter().sum::<u64>(), 8);
        assert_eq!(c[6], 2);
        assert_eq!(c[12], 1);
    }

    #[test]
    fn large_n_uses_normal() {
        let d: Vec<f64> = (1..=40).map(|i| i as f64 * if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let r = wilcoxon_signed_rank(&d, Alternative::TwoSided);
        assert_eq!(r.method, Method::NormalApprox);
        assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        assert!((r.w_plus + r.w_minus - 820.0).abs() < 1e-9);
    }
}
