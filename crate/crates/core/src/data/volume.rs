use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Scan-level class. Index 1 is the positive (COVID-19) class everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NonCovid,
    Covid,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::NonCovid => 0,
            Label::Covid => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::NonCovid),
            1 => Some(Label::Covid),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::NonCovid => "non-covid",
            Label::Covid => "covid",
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::NonCovid => Label::Covid,
            Label::Covid => Label::NonCovid,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Label> {
        match s.trim() {
            "covid" => Ok(Label::Covid),
            "non-covid" => Ok(Label::NonCovid),
            other => Err(Error::Data(format!(
                "unknown label `{other}` (expected `covid` or `non-covid`)"
            ))),
        }
    }
}

/// Ordered stack of `depth` grayscale slices, voxels in `[0, 1]`,
/// stored slice-major then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CtVolume {
    pub id: String,
    depth: usize,
    height: usize,
    width: usize,
    voxels: Vec<f32>,
    pub label: Option<Label>,
}

impl CtVolume {
    pub fn new(
        id: impl Into<String>,
        (depth, height, width): (usize, usize, usize),
        voxels: Vec<f32>,
        label: Option<Label>,
    ) -> Result<Self> {
        if depth == 0 || height == 0 || width == 0 {
            return Err(Error::Data(format!(
                "volume dimensions must be positive, got {depth}×{height}×{width}"
            )));
        }
        if voxels.len() != depth * height * width {
            return Err(Error::Data(format!(
                "{depth}×{height}×{width} volume needs {} voxels, got {}",
                depth * height * width,
                voxels.len()
            )));
        }
        if let Some(v) = voxels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("voxel value {v} outside [0, 1]")));
        }
        Ok(CtVolume {
            id: id.into(),
            depth,
            height,
            width,
            voxels,
            label,
        })
    }

    /// Builds a volume from equally sized slices.
    pub fn from_slices(id: impl Into<String>, slices: Vec<Vec<f32>>, (height, width): (usize, usize), label: Option<Label>) -> Result<Self> {
        let depth = slices.len();
        let mut voxels = Vec::with_capacity(depth * height * width);
        for s in &slices {
            if s.len() != height * width {
                return Err(Error::Data("slices differ in size".into()));
            }
            voxels.extend_from_slice(s);
        }
        CtVolume::new(id, (depth, height, width), voxels, label)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.depth, self.height, self.width)
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn slice(&self, i: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.voxels[i * n..(i + 1) * n]
    }

    pub fn slices(&self) -> impl Iterator<Item = &[f32]> {
        self.voxels.chunks(self.height * self.width)
    }
}

/// On-disk layout accepted by [`load_volume`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceKind {
    /// Directory of 8- or 16-bit grayscale PNGs, one per slice.
    PngDir,
    /// Single `CTV10000` file.
    Raw,
}

impl SourceKind {
    pub fn detect(path: &Path) -> SourceKind {
        if path.is_dir() {
            SourceKind::PngDir
        } else {
            SourceKind::Raw
        }
    }
}

pub const RAW_MAGIC: &[u8; 8] = b"CTV10000";

/// Loads one scan. Labels come from `label.txt` inside a PNG directory, or
/// from a sibling `<stem>.label` file next to a raw volume.
pub fn load_volume(path: &Path, kind: SourceKind) -> Result<CtVolume> {
    match kind {
        SourceKind::PngDir => load_png_dir(path),
        SourceKind::Raw => {
            let mut v = read_raw(path)?;
            let sidecar = path.with_extension("label");
            if sidecar.is_file() {
                v.label = Some(read_label_file(&sidecar)?);
            }
            Ok(v)
        }
    }
}

fn read_label_file(path: &Path) -> Result<Label> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.parse()
        .map_err(|e: Error| Error::format(path, e.to_string()))
}

fn volume_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn encode_raw(volume: &CtVolume) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + volume.voxels.len() * 4);
    out.extend_from_slice(RAW_MAGIC);
    for d in [volume.depth, volume.height, volume.width] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in &volume.voxels {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_raw(path: &Path, volume: &CtVolume) -> Result<()> {
    std::fs::write(path, encode_raw(volume)).map_err(|e| Error::io(path, e))
}

/// Parses a raw volume. Values already inside `[0, 1]` are kept as stored;
/// otherwise the volume is min-max rescaled onto `[0, 1]`.
pub fn decode_raw(bytes: &[u8], path: &Path) -> Result<CtVolume> {
    if bytes.len() < 20 || &bytes[..8] != RAW_MAGIC {
        return Err(Error::format(path, "bad magic (expected CTV10000)"));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (d, h, w) = (dim(0), dim(1), dim(2));
    if d == 0 || h == 0 || w == 0 {
        return Err(Error::format(path, format!("empty volume {d}×{h}×{w}")));
    }
    let n = d
        .checked_mul(h)
        .and_then(|x| x.checked_mul(w))
        .ok_or_else(|| Error::format(path, "header dimensions overflow"))?;
    let body = &bytes[20..];
    if body.len() != n * 4 {
        return Err(Error::format(
            path,
            format!("truncated volume: header needs {} bytes of voxels, found {}", n * 4, body.len()),
        ));
    }
    let mut voxels: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if voxels.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(path, "non-finite voxel value"));
    }
    if voxels.iter().any(|v| !(0.0..=1.0).contains(v)) {
        rescale_unit(&mut voxels);
    }
    CtVolume::new(volume_id(path), (d, h, w), voxels, None)
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_raw(path: &Path) -> Result<CtVolume> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw(&bytes, path)
}

fn rescale_unit(values: &mut [f32]) {
    let lo = values.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let span = hi - lo;
    for v in values.iter_mut() {
        *v = if span > 0.0 { ((*v - lo) / span).clamp(0.0, 1.0) } else { 0.0 };
    }
}

/// Reads every `*.png` in `dir` in byte-wise lexicographic filename order.
pub fn load_png_dir(dir: &Path) -> Result<CtVolume> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = p
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if p.is_file() && is_png {
            files.push(p);
        }
    }
    if files.is_empty() {
        return Err(Error::format(dir, "no PNG slices found"));
    }
    files.sort_by(|a, b| {
        a.file_name()
            .unwrap()
            .as_encoded_bytes()
            .cmp(b.file_name().unwrap().as_encoded_bytes())
    });

    let mut size = None;
    let mut voxels = Vec::new();
    for f in &files {
        let img = image::open(f).map_err(|e| Error::format(f, e.to_string()))?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match size {
            None => size = Some((h, w)),
            Some(s) if s != (h, w) => {
                return Err(Error::format(
                    f,
                    format!("slice is {h}×{w}, earlier slices are {}×{}", s.0, s.1),
                ))
            }
            _ => {}
        }
        match img {
            image::DynamicImage::ImageLuma8(buf) => {
                voxels.extend(buf.as_raw().iter().map(|&p| p as f32 / 255.0))
            }
            image::DynamicImage::ImageLuma16(buf) => {
                voxels.extend(buf.as_raw().iter().map(|&p| p as f32 / 65535.0))
            }
            other => {
                return Err(Error::format(
                    f,
                    format!("expected 8- or 16-bit grayscale, got {:?}", other.color()),
                ))
            }
        }
    }
    let (h, w) = size.unwrap();
    let label_path = dir.join("label.txt");
    let label = if label_path.is_file() {
        Some(read_label_file(&label_path)?)
    } else {
        None
    };
    CtVolume::new(volume_id(dir), (files.len(), h, w), voxels, label)
        .map_err(|e| Error::format(dir, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_png8(path: &Path, w: u32, h: u32, value: u8) {
        image::GrayImage::from_pixel(w, h, image::Luma([value]))
            .save(path)
            .unwrap();
    }

    #[test]
    fn png_dir_counts_and_range() {
        let dir = tempfile::tempdir().unwrap();
        for i in 1..=40 {
            let v = if i == 1 { 0 } else { 255 };
            write_png8(&dir.path().join(format!("{i:03}.png")), 64, 64, v);
        }
        std::fs::write(dir.path().join("label.txt"), "covid\n").unwrap();
        let vol = load_volume(dir.path(), SourceKind::PngDir).unwrap();
        assert_eq!(vol.dims(), (40, 64, 64));
        assert!(vol.slice(0).iter().all(|&v| v == 0.0));
        assert!(vol.slice(1).iter().all(|&v| v == 1.0));
        assert_eq!(vol.label, Some(Label::Covid));
    }

    #[test]
    fn png_dir_byte_order_and_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        // byte order puts "B.png" before "a.png"
        image::ImageBuffer::<image::Luma<u16>, _>::from_pixel(4, 4, image::Luma([65535u16]))
            .save(dir.path().join("B.png"))
            .unwrap();
        write_png8(&dir.path().join("a.png"), 4, 4, 0);
        let vol = load_png_dir(dir.path()).unwrap();
        assert_eq!(vol.slice(0)[0], 1.0);
        assert_eq!(vol.slice(1)[0], 0.0);
    }

    #[test]
    fn png_dir_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_png_dir(dir.path()), Err(Error::Format { .. })));
        write_png8(&dir.path().join("1.png"), 8, 8, 1);
        write_png8(&dir.path().join("2.png"), 8, 9, 1);
        let err = load_png_dir(dir.path()).unwrap_err();
        assert!(err.to_string().contains("2.png"), "{err}");
    }

    #[test]
    fn raw_round_trip_and_header() {
        let vox: Vec<f32> = (0..16 * 32 * 32).map(|i| (i % 97) as f32 / 96.0).collect();
        let v = CtVolume::new("scan", (16, 32, 32), vox, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scan.ctv");
        write_raw(&p, &v).unwrap();
        std::fs::write(dir.path().join("scan.label"), "non-covid").unwrap();
        let back = load_volume(&p, SourceKind::Raw).unwrap();
        assert_eq!(back.dims(), (16, 32, 32));
        assert_eq!(back.voxels(), v.voxels());
        assert_eq!(back.label, Some(Label::NonCovid));
    }

    #[test]
    fn raw_errors() {
        let v = CtVolume::new("s", (2, 2, 2), vec![0.5; 8], None).unwrap();
        let bytes = encode_raw(&v);
        let p = Path::new("bad.ctv");
        assert!(decode_raw(&bytes[..bytes.len() - 1], p).unwrap_err().to_string().contains("truncated"));
        let mut bad = bytes.clone();
        bad[3] = b'X';
        assert!(decode_raw(&bad, p).unwrap_err().to_string().contains("magic"));
    }

    #[test]
    fn raw_out_of_range_is_rescaled() {
        let mut bytes = RAW_MAGIC.to_vec();
        for d in [1u32, 1, 3] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        for v in [-1000.0f32, 0.0, 1000.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let v = decode_raw(&bytes, Path::new("hu.ctv")).unwrap();
        assert_eq!(v.voxels(), &[0.0, 0.5, 1.0]);
    }
}
