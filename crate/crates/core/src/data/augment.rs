use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::volume::CtVolume;
use crate::config::KeyValues;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    Nearest,
    Bilinear,
}

/// Volume-level augmentation. Every enabled transform draws its parameters
/// once per volume and applies them identically to all slices.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentationSpec {
    /// Gaussian blur with σ drawn from `[0, max]` pixels.
    pub blur_sigma: Option<f32>,
    /// Additive Gaussian noise with std drawn from `[0, max]`.
    pub noise_std: Option<f32>,
    /// Contrast factor drawn from `[1 - c, 1 + c]`, pivoting on the volume mean.
    pub contrast: Option<f32>,
    /// Brightness offset drawn from `[-b, b]`.
    pub brightness: Option<f32>,
    /// Radial (barrel/pincushion) coefficient drawn from `[-k, k]`, `k ≤ 0.1`.
    pub distortion: Option<f32>,
    /// Crop side fraction drawn from `[min, 1]`; the crop is resampled back
    /// to the full slice size.
    pub crop_scale: Option<f32>,
    /// In-plane rotation drawn from `[-deg, deg]`.
    pub rotation_deg: Option<f32>,
    pub interpolation: Interpolation,
    pub seed: u64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec::none()
    }
}

impl AugmentationSpec {
    pub fn none() -> Self {
        AugmentationSpec {
            blur_sigma: None,
            noise_std: None,
            contrast: None,
            brightness: None,
            distortion: None,
            crop_scale: None,
            rotation_deg: None,
            interpolation: Interpolation::Bilinear,
            seed: 0,
        }
    }

    pub fn training() -> Self {
        AugmentationSpec {
            blur_sigma: Some(0.8),
            noise_std: Some(0.02),
            contrast: Some(0.15),
            brightness: Some(0.05),
            distortion: Some(0.05),
            crop_scale: Some(0.85),
            rotation_deg: Some(10.0),
            interpolation: Interpolation::Bilinear,
            seed: 0,
        }
    }

    pub fn is_identity(&self) -> bool {
        [
            self.blur_sigma,
            self.noise_std,
            self.contrast,
            self.brightness,
            self.distortion,
            self.crop_scale,
            self.rotation_deg,
        ]
        .iter()
        .all(Option::is_none)
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: Option<f32>| match v {
            Some(x) if !(x >= 0.0 && x.is_finite()) => {
                Err(Error::Parameter(format!("augmentation `{name}` must be ≥ 0, got {x}")))
            }
            _ => Ok(()),
        };
        nonneg("blur", self.blur_sigma)?;
        nonneg("noise", self.noise_std)?;
        nonneg("contrast", self.contrast)?;
        nonneg("brightness", self.brightness)?;
        nonneg("rotation", self.rotation_deg)?;
        if let Some(k) = self.distortion {
            if !(0.0..=0.1).contains(&k) {
                return Err(Error::Parameter(format!("distortion must lie in [0, 0.1], got {k}")));
            }
        }
        if let Some(s) = self.crop_scale {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::Parameter(format!("crop scale must lie in (0, 1], got {s}")));
            }
        }
        Ok(())
    }
}

/// Magnitudes as `key = value` pairs; `off` disables a transform.
const KV_KEYS: [&str; 7] = ["blur", "noise", "contrast", "brightness", "distortion", "crop", "rotation"];

impl AugmentationSpec {
    fn slots(&mut self) -> [&mut Option<f32>; 7] {
        [
            &mut self.blur_sigma,
            &mut self.noise_std,
            &mut self.contrast,
            &mut self.brightness,
            &mut self.distortion,
            &mut self.crop_scale,
            &mut self.rotation_deg,
        ]
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        let mut copy = self.clone();
        for (k, v) in KV_KEYS.iter().zip(copy.slots()) {
            match v {
                Some(x) => kv.insert(*k, *x),
                None => kv.insert(*k, "off"),
            }
        }
        let interp = match self.interpolation {
            Interpolation::Nearest => "nearest",
            Interpolation::Bilinear => "bilinear",
        };
        kv.insert("interpolation", interp);
        kv.insert("seed", self.seed);
        kv
    }

    /// Starts from [`AugmentationSpec::training`], or from no augmentation
    /// when `enabled = false`.
    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let mut spec = if kv.take_or("enabled", true)? {
            AugmentationSpec::training()
        } else {
            AugmentationSpec::none()
        };
        for (k, slot) in KV_KEYS.iter().zip(spec.slots()) {
            match kv.take::<String>(k)?.as_deref() {
                None => {}
                Some("off") => *slot = None,
                Some(v) => {
                    let x = v
                        .parse()
                        .map_err(|_| Error::Config(format!("augment.{k}: expected a number or `off`, got `{v}`")))?;
                    *slot = Some(x);
                }
            }
        }
        spec.interpolation = match kv.take::<String>("interpolation")?.as_deref() {
            None | Some("bilinear") => Interpolation::Bilinear,
            Some("nearest") => Interpolation::Nearest,
            Some(other) => return Err(Error::Config(format!("augment.interpolation: unknown `{other}`"))),
        };
        spec.seed = kv.take_or("seed", spec.seed)?;
        kv.finish().map_err(|e| Error::Config(format!("augment: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Parameters drawn once for one volume.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentParams {
    pub blur_sigma: f32,
    pub noise_std: f32,
    pub contrast: f32,
    pub brightness: f32,
    pub distortion: f32,
    /// `(y0, x0, height, width)` of the crop window.
    pub crop: Option<(usize, usize, usize, usize)>,
    pub rotation_rad: f32,
    geometric: bool,
}

pub const MIN_CROP: usize = 8;

impl AugmentParams {
    pub fn draw<R: Rng + ?Sized>(spec: &AugmentationSpec, (h, w): (usize, usize), rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut sym = |a: Option<f32>| a.map_or(0.0, |a| if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 });
        let contrast = 1.0 + sym(spec.contrast);
        let brightness = sym(spec.brightness);
        let distortion = sym(spec.distortion);
        let rotation_rad = sym(spec.rotation_deg).to_radians();
        let mut up = |a: Option<f32>| a.map_or(0.0, |a| if a > 0.0 { rng.random_range(0.0..=a) } else { 0.0 });
        let blur_sigma = up(spec.blur_sigma);
        let noise_std = up(spec.noise_std);
        let crop = match spec.crop_scale {
            None => None,
            Some(min) => {
                let s = if min < 1.0 { rng.random_range(min..=1.0) } else { 1.0 };
                let ch = ((h as f32 * s).round() as usize).min(h);
                let cw = ((w as f32 * s).round() as usize).min(w);
                if ch < MIN_CROP || cw < MIN_CROP {
                    return Err(Error::Parameter(format!(
                        "crop region {ch}×{cw} is smaller than {MIN_CROP}×{MIN_CROP}"
                    )));
                }
                let y0 = rng.random_range(0..=h - ch);
                let x0 = rng.random_range(0..=w - cw);
                Some((y0, x0, ch, cw))
            }
        };
        Ok(AugmentParams {
            blur_sigma,
            noise_std,
            contrast,
            brightness,
            distortion,
            crop,
            rotation_rad,
            geometric: spec.crop_scale.is_some() || spec.rotation_deg.is_some() || spec.distortion.is_some(),
        })
    }
}

/// Applies one draw of `spec` to the whole volume.
pub fn augment<R: Rng + ?Sized>(volume: &CtVolume, spec: &AugmentationSpec, rng: &mut R) -> Result<CtVolume> {
    if spec.is_identity() {
        return Ok(volume.clone());
    }
    let (d, h, w) = volume.dims();
    let params = AugmentParams::draw(spec, (h, w), rng)?;
    let mut slices: Vec<Vec<f32>> = volume.slices().map(<[f32]>::to_vec).collect();

    if params.geometric {
        let map = geometric_map(&params, h, w);
        for s in &mut slices {
            *s = resample(s, h, w, &map, spec.interpolation);
        }
    }
    if params.blur_sigma > 1e-3 {
        let kernel = gaussian_kernel(params.blur_sigma);
        for s in &mut slices {
            blur(s, h, w, &kernel);
        }
    }
    if spec.contrast.is_some() {
        let n = (d * h * w) as f64;
        let mean = (slices.iter().flatten().map(|&v| v as f64).sum::<f64>() / n) as f32;
        for v in slices.iter_mut().flatten() {
            *v = mean + (*v - mean) * params.contrast;
        }
    }
    if spec.brightness.is_some() {
        for v in slices.iter_mut().flatten() {
            *v += params.brightness;
        }
    }
    if params.noise_std > 0.0 {
        let normal = Normal::new(0.0f32, params.noise_std).expect("finite std");
        for v in slices.iter_mut().flatten() {
            *v += normal.sample(rng);
        }
    }
    for v in slices.iter_mut().flatten() {
        *v = v.clamp(0.0, 1.0);
    }
    CtVolume::from_slices(volume.id.clone(), slices, (h, w), volume.label)
}

/// Source coordinate for every destination pixel (rotation, then radial
/// distortion, then crop window), shared by all slices.
fn geometric_map(p: &AugmentParams, h: usize, w: usize) -> Vec<(f32, f32)> {
    let (cy, cx) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
    let (sin, cos) = p.rotation_rad.sin_cos();
    let (y0, x0, ch, cw) = p.crop.unwrap_or((0, 0, h, w));
    let (sy, sx) = (ch as f32 / h as f32, cw as f32 / w as f32);
    let mut map = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = (y as f32 - cy, x as f32 - cx);
            let (mut u, mut v) = (cos * dy + sin * dx, -sin * dy + cos * dx);
            if p.distortion != 0.0 {
                let (ny, nx) = (u / (h as f32 / 2.0), v / (w as f32 / 2.0));
                let f = 1.0 + p.distortion * (ny * ny + nx * nx);
                u *= f;
                v *= f;
            }
            let (u, v) = (u + cy, v + cx);
            map.push((y0 as f32 + (u + 0.5) * sy - 0.5, x0 as f32 + (v + 0.5) * sx - 0.5));
        }
    }
    map
}

fn resample(src: &[f32], h: usize, w: usize, map: &[(f32, f32)], interp: Interpolation) -> Vec<f32> {
    map.iter()
        .map(|&(y, x)| match interp {
            Interpolation::Nearest => {
                let (iy, ix) = (y.round(), x.round());
                if iy < 0.0 || ix < 0.0 || iy >= h as f32 || ix >= w as f32 {
                    0.0
                } else {
                    src[iy as usize * w + ix as usize]
                }
            }
            Interpolation::Bilinear => {
                if y < -0.5 || x < -0.5 || y > h as f32 - 0.5 || x > w as f32 - 0.5 {
                    return 0.0;
                }
                let y = y.clamp(0.0, (h - 1) as f32);
                let x = x.clamp(0.0, (w - 1) as f32);
                let (ya, xa) = (y.floor() as usize, x.floor() as usize);
                let (yb, xb) = ((ya + 1).min(h - 1), (xa + 1).min(w - 1));
                let (fy, fx) = (y - ya as f32, x - xa as f32);
                let top = src[ya * w + xa] * (1.0 - fx) + src[ya * w + xb] * fx;
                let bot = src[yb * w + xa] * (1.0 - fx) + src[yb * w + xb] * fx;
                top * (1.0 - fy) + bot * fy
            }
        })
        .collect()
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i32;
    let k: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f32 = k.iter().sum();
    k.into_iter().map(|v| v / total).collect()
}

fn blur(img: &mut [f32], h: usize, w: usize, kernel: &[f32]) {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let xi = (x as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                acc += kv * img[y * w + xi];
            }
            tmp[y * w + x] = acc;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let yi = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
                acc += kv * tmp[yi * w + x];
            }
            img[y * w + x] = acc;
        }
    }
}
