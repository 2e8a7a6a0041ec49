use std::path::{Path, PathBuf};

use super::volume::{load_volume, write_raw, CtVolume, Label, SourceKind};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.csv";
const MANIFEST_HEADER: &str = "id,path,label";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub label: Label,
}

pub fn write_manifest(dir: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::from(MANIFEST_HEADER);
    text.push('\n');
    for e in entries {
        text.push_str(&format!("{},{},{}\n", e.id, e.path.display(), e.label));
    }
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MANIFEST_HEADER) {
        return Err(Error::format(&path, format!("expected header `{MANIFEST_HEADER}`")));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            let [id, p, label] = fields[..] else {
                return Err(Error::format(&path, format!("line {}: expected 3 fields", i + 2)));
            };
            Ok(ManifestEntry {
                id: id.to_string(),
                path: PathBuf::from(p),
                label: label
                    .parse()
                    .map_err(|e: Error| Error::format(&path, format!("line {}: {e}", i + 2)))?,
            })
        })
        .collect()
}

/// Writes `scans/<id>.ctv` with a `scans/<id>.label` sidecar per volume and
/// the manifest. Every volume needs a label.
pub fn save_dataset(dir: &Path, volumes: &[CtVolume]) -> Result<()> {
    let scans = dir.join("scans");
    std::fs::create_dir_all(&scans).map_err(|e| Error::io(&scans, e))?;
    let mut entries = Vec::with_capacity(volumes.len());
    for v in volumes {
        let label = v
            .label
            .ok_or_else(|| Error::Data(format!("scan {} has no label", v.id)))?;
        let rel = PathBuf::from("scans").join(format!("{}.ctv", v.id));
        let path = dir.join(&rel);
        write_raw(&path, v)?;
        let sidecar = path.with_extension("label");
        std::fs::write(&sidecar, format!("{label}\n")).map_err(|e| Error::io(sidecar, e))?;
        entries.push(ManifestEntry {
            id: v.id.clone(),
            path: rel,
            label,
        });
    }
    write_manifest(dir, &entries)
}

/// Loads every scan listed in `dir/manifest.csv`, in manifest order.
pub fn load_dataset(dir: &Path) -> Result<Vec<CtVolume>> {
    if !dir.is_dir() {
        return Err(Error::Data(format!("data directory {} does not exist", dir.display())));
    }
    let entries = read_manifest(dir)?;
    if entries.is_empty() {
        return Err(Error::Data(format!("{} lists no scans", dir.join(MANIFEST_FILE).display())));
    }
    entries
        .iter()
        .map(|e| {
            let p = dir.join(&e.path);
            let mut v = load_volume(&p, SourceKind::detect(&p))?;
            v.id = e.id.clone();
            v.label = Some(e.label);
            Ok(v)
        })
        .collect()
}

/// Deterministic stratified split: within each class, in input order, the
/// last `round(n_class · val_fraction)` scans go to validation.
pub fn split_stratified(volumes: Vec<CtVolume>, val_fraction: f64) -> Result<(Vec<CtVolume>, Vec<CtVolume>)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Parameter(format!("validation fraction must lie in [0, 1), got {val_fraction}")));
    }
    let count = |l: Label| volumes.iter().filter(|v| v.label == Some(l)).count();
    if volumes.iter().any(|v| v.label.is_none()) {
        return Err(Error::Data("every scan needs a label to be split".into()));
    }
    let n_val = |l: Label| (count(l) as f64 * val_fraction).round() as usize;
    let keep = [count(Label::NonCovid) - n_val(Label::NonCovid), count(Label::Covid) - n_val(Label::Covid)];
    let mut seen = [0usize; 2];
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for v in volumes {
        let c = v.label.unwrap().index();
        if seen[c] < keep[c] {
            train.push(v);
        } else {
            val.push(v);
        }
        seen[c] += 1;
    }
    Ok((train, val))
}
