//! Fixed sinusoidal positional encodings.

/// `pe[pos, 2i] = sin(pos / 10000^(2i/dim))`, `pe[pos, 2i+1] = cos(…)`,
/// row-major `[positions × dim]`.
pub fn sinusoid_1d(positions: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; positions * dim];
    for pos in 0..positions {
        for j in 0..dim {
            let pair = (j / 2) as f64 * 2.0;
            let angle = pos as f64 / 10000f64.powf(pair / dim as f64);
            out[pos * dim + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}

/// Row index encoded in the first `dim/2` channels, column index in the
/// rest. Output is `[(h·w) × dim]` in row-major token order.
pub fn sinusoid_2d(h: usize, w: usize, dim: usize) -> Vec<f64> {
    let dy = dim / 2;
    let dx = dim - dy;
    let rows = sinusoid_1d(h, dy);
    let cols = sinusoid_1d(w, dx);
    let mut out = Vec::with_capacity(h * w * dim);
    for y in 0..h {
        for x in 0..w {
            out.extend_from_slice(&rows[y * dy..(y + 1) * dy]);
            out.extend_from_slice(&cols[x * dx..(x + 1) * dx]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_position_pattern() {
        let pe = sinusoid_1d(3, 4);
        assert_eq!(&pe[..4], &[0.0, 1.0, 0.0, 1.0]);
        assert!((pe[4] - 1f64.sin()).abs() < 1e-15);
        assert!((pe[6] - (1.0 / 100.0f64).sin()).abs() < 1e-15);
    }

    #[test]
    fn two_d_is_distinct_per_token() {
        let pe = sinusoid_2d(4, 4, 8);
        assert_eq!(pe.len(), 16 * 8);
        for a in 0..16 {
            for b in a + 1..16 {
                assert_ne!(&pe[a * 8..(a + 1) * 8], &pe[b * 8..(b + 1) * 8]);
            }
        }
    }
}
