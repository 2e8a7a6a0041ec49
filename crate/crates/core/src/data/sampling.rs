use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};

/// How slices are chosen from a scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SamplingMode {
    /// Contiguous window covering `fraction` of the depth, centered.
    CenterFraction { fraction: f64 },
    /// `slices` indices spaced `stride` apart.
    Strided { slices: usize, stride: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingSpec {
    pub mode: SamplingMode,
    pub seed: u64,
}

impl SamplingSpec {
    pub fn center(fraction: f64) -> Self {
        SamplingSpec {
            mode: SamplingMode::CenterFraction { fraction },
            seed: 0,
        }
    }

    pub fn strided(slices: usize, stride: usize) -> Self {
        SamplingSpec {
            mode: SamplingMode::Strided { slices, stride },
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            SamplingMode::CenterFraction { fraction } if !(fraction > 0.0 && fraction <= 1.0) => Err(
                Error::Parameter(format!("slice fraction must lie in (0, 1], got {fraction}")),
            ),
            SamplingMode::Strided { slices, stride } if slices == 0 || stride == 0 => Err(
                Error::Parameter("strided sampling needs slices ≥ 1 and stride ≥ 1".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Centered window of `max(1, round(depth·fraction))` slices.
pub fn center_fraction_indices(depth: usize, fraction: f64) -> Result<Range<usize>> {
    if depth == 0 {
        return Err(Error::Parameter("depth must be ≥ 1".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Parameter(format!("slice fraction must lie in (0, 1], got {fraction}")));
    }
    let n_sel = ((depth as f64 * fraction).round() as usize).clamp(1, depth);
    let start = (depth - n_sel) / 2;
    Ok(start..start + n_sel)
}

fn strided_layout(depth: usize, slices: usize, stride: usize, pick_start: impl FnOnce(usize) -> usize) -> Vec<usize> {
    let span = (slices - 1) * stride + 1;
    if depth >= span {
        let start = pick_start(depth - span);
        (0..slices).map(|k| start + k * stride).collect()
    } else if depth >= slices {
        let start = pick_start(depth - slices);
        (start..start + slices).collect()
    } else {
        (0..slices).map(|k| k.min(depth - 1)).collect()
    }
}

/// Random strided window: `slices` indices `stride` apart with a uniform
/// start. Short scans fall back to stride 1, then to repeating the last
/// slice until `slices` indices exist.
pub fn strided_sample<R: Rng + ?Sized>(depth: usize, slices: usize, stride: usize, rng: &mut R) -> Vec<usize> {
    assert!(depth >= 1 && slices >= 1 && stride >= 1);
    strided_layout(depth, slices, stride, |max_start| rng.random_range(0..=max_start))
}

/// Deterministic version of [`strided_sample`] that centers the window.
pub fn centered_strided(depth: usize, slices: usize, stride: usize) -> Vec<usize> {
    assert!(depth >= 1 && slices >= 1 && stride >= 1);
    strided_layout(depth, slices, stride, |max_start| max_start / 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn center_window_examples() {
        assert_eq!(center_fraction_indices(100, 0.4).unwrap(), 30..70);
        assert_eq!(center_fraction_indices(5, 1.0).unwrap(), 0..5);
        assert_eq!(center_fraction_indices(1, 0.4).unwrap(), 0..1);
        assert!(center_fraction_indices(10, 0.0).is_err());
        assert!(center_fraction_indices(10, 1.5).is_err());
    }

    #[test]
    fn strided_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut starts = std::collections::BTreeSet::new();
        for _ in 0..500 {
            let idx = strided_sample(40, 16, 2, &mut rng);
            let s = idx[0];
            assert!(s <= 9);
            assert_eq!(idx, (0..16).map(|k| s + 2 * k).collect::<Vec<_>>());
            starts.insert(s);
        }
        assert_eq!(starts.len(), 10);

        assert_eq!(strided_sample(16, 16, 2, &mut rng), (0..16).collect::<Vec<_>>());

        let mut expect: Vec<usize> = (0..10).collect();
        expect.extend([9; 6]);
        assert_eq!(strided_sample(10, 16, 2, &mut rng), expect);
        assert_eq!(centered_strided(10, 16, 2), expect);
    }

    #[test]
    fn centered_window_is_middle() {
        assert_eq!(centered_strided(40, 16, 2)[0], 4);
        assert_eq!(centered_strided(31, 16, 2), (0..16).map(|k| 2 * k).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn center_window_properties(depth in 1usize..500, fraction in 0.001f64..=1.0) {
            let r = center_fraction_indices(depth, fraction).unwrap();
            let n = ((depth as f64 * fraction).round() as usize).max(1);
            prop_assert_eq!(r.len(), n);
            let mid = (r.start + r.end) as f64 / 2.0;
            prop_assert!((mid - depth as f64 / 2.0).abs() <= 1.0);
            prop_assert!(r.end <= depth);
        }

        #[test]
        fn strided_properties(depth in 1usize..120, slices in 1usize..20, stride in 1usize..4, seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let idx = strided_sample(depth, slices, stride, &mut rng);
            prop_assert_eq!(idx.len(), slices);
            prop_assert!(idx.iter().all(|&i| i < depth));
            if depth > (slices - 1) * stride {
                prop_assert!(idx.windows(2).all(|w| w[1] - w[0] == stride));
            } else {
                prop_assert!(idx.windows(2).all(|w| w[1] >= w[0]));
            }
        }
    }
}
