//! Synthetic chest-volume stand-in.
//!
//! Background: a few low-frequency 3-D cosine waves, rescaled into
//! [`BACKGROUND_RANGE`]. Positive volumes also get 2–5 Gaussian lesions
//! (peak 0.3–0.6, in-plane σ 3–6 px, through-plane σ 1.5–3 slices) whose
//! mass is written only into the central half of the depth axis.

use std::f32::consts::PI;
use std::ops::Range;

use rand::Rng;

use super::volume::{CtVolume, Label};
use crate::error::{Error, Result};

pub const MIN_SYNTH_DEPTH: usize = 8;
pub const BACKGROUND_RANGE: (f32, f32) = (0.20, 0.45);
const WAVES: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct Lesion {
    pub z: f32,
    pub y: f32,
    pub x: f32,
    pub sigma: f32,
    pub sigma_z: f32,
    pub amplitude: f32,
}

#[derive(Clone, Debug)]
pub struct SynthComponents {
    pub dims: (usize, usize, usize),
    pub background: Vec<f32>,
    /// Additive lesion field; all zeros for negative volumes.
    pub lesion_field: Vec<f32>,
    pub lesions: Vec<Lesion>,
}

impl SynthComponents {
    pub fn compose(&self, id: impl Into<String>, label: Label) -> Result<CtVolume> {
        let voxels = self
            .background
            .iter()
            .zip(&self.lesion_field)
            .map(|(&b, &l)| (b + l).clamp(0.0, 1.0))
            .collect();
        CtVolume::new(id, self.dims, voxels, Some(label))
    }
}

/// Slices that may carry lesions: the central 50% of the depth.
pub fn lesion_band(depth: usize) -> Range<usize> {
    let margin = depth / 4;
    margin..depth - margin
}

pub fn synth_components<R: Rng + ?Sized>(label: Label, (d, h, w): (usize, usize, usize), rng: &mut R) -> Result<SynthComponents> {
    if d < MIN_SYNTH_DEPTH {
        return Err(Error::Parameter(format!(
            "synthetic depth must be ≥ {MIN_SYNTH_DEPTH}, got {d}"
        )));
    }
    if h == 0 || w == 0 {
        return Err(Error::Parameter("synthetic slices must be non-empty".into()));
    }

    let waves: Vec<[f32; 5]> = (0..WAVES)
        .map(|_| {
            [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(-1.5..1.5),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.5..1.0),
            ]
        })
        .collect();
    let mut background = Vec::with_capacity(d * h * w);
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let (zf, yf, xf) = (z as f32 / d as f32, y as f32 / h as f32, x as f32 / w as f32);
                let v: f32 = waves
                    .iter()
                    .map(|[fz, fy, fx, phase, amp]| amp * (2.0 * PI * (fz * zf + fy * yf + fx * xf) + phase).cos())
                    .sum();
                background.push(v);
            }
        }
    }
    let lo = background.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = background.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let (blo, bhi) = BACKGROUND_RANGE;
    for v in &mut background {
        *v = if hi > lo { blo + (*v - lo) / (hi - lo) * (bhi - blo) } else { (blo + bhi) / 2.0 };
    }

    let mut lesion_field = vec![0.0f32; d * h * w];
    let mut lesions = Vec::new();
    if label == Label::Covid {
        let band = lesion_band(d);
        let count = rng.random_range(2..=5);
        for _ in 0..count {
            let sigma = rng.random_range(3.0f32..=6.0);
            let lesion = Lesion {
                z: rng.random_range(band.start as f32..=(band.end - 1) as f32),
                y: rng.random_range(0.0..h as f32),
                x: rng.random_range(0.0..w as f32),
                sigma,
                sigma_z: rng.random_range(1.5f32..=3.0),
                amplitude: rng.random_range(0.3f32..=0.6),
            };
            for z in band.clone() {
                let dz = z as f32 - lesion.z;
                let fz = (-dz * dz / (2.0 * lesion.sigma_z * lesion.sigma_z)).exp();
                for y in 0..h {
                    let dy = y as f32 - lesion.y;
                    for x in 0..w {
                        let dx = x as f32 - lesion.x;
                        let r2 = (dy * dy + dx * dx) / (2.0 * sigma * sigma);
                        lesion_field[(z * h + y) * w + x] += lesion.amplitude * fz * (-r2).exp();
                    }
                }
            }
            lesions.push(lesion);
        }
    }
    Ok(SynthComponents {
        dims: (d, h, w),
        background,
        lesion_field,
        lesions,
    })
}

pub fn synth_volume<R: Rng + ?Sized>(label: Label, dims: (usize, usize, usize), rng: &mut R) -> Result<CtVolume> {
    synth_components(label, dims, rng)?.compose("synth", label)
}
