use std::fmt::Write as _;
use std::path::Path;

use super::decision::ScanDecision;
use crate::error::{Error, Result};

/// Per-slice COVID probabilities of one scan, sorted by slice index.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceScoreSet {
    pub scan_id: String,
    entries: Vec<(usize, f64)>,
}

impl SliceScoreSet {
    pub fn new(scan_id: impl Into<String>, entries: Vec<(usize, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Data("a score set needs at least one slice".into()));
        }
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Data("slice indices must be unique and ascending".into()));
        }
        if let Some(&(i, p)) = entries.iter().find(|e| !(0.0..=1.0).contains(&e.1)) {
            return Err(Error::Data(format!("slice {i}: probability {p} outside [0, 1]")));
        }
        Ok(SliceScoreSet {
            scan_id: scan_id.into(),
            entries,
        })
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, p) in &self.entries {
            writeln!(s, "{i}\t{p}").unwrap();
        }
        s
    }

    /// Parses `slice_index<TAB>p_covid` lines; `#` lines are ignored.
    pub fn parse(scan_id: impl Into<String>, text: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::format(path, format!("line {}: expected `slice_index<TAB>p_covid`", n + 1));
            let (idx, p) = line.split_once('\t').ok_or_else(bad)?;
            entries.push((idx.trim().parse().map_err(|_| bad())?, p.trim().parse().map_err(|_| bad())?));
        }
        SliceScoreSet::new(scan_id, entries).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        SliceScoreSet::parse(id, &text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// `d = p − (1 − p) = 2p − 1` per slice; zero means no evidence either way.
pub fn paired_differences(scores: &SliceScoreSet) -> Vec<f64> {
    scores.entries.iter().map(|&(_, p)| 2.0 * p - 1.0).collect()
}

/// Appends the `# label=… q=… p=… n=… method=…` report line to a score file.
pub fn append_decision(path: &Path, decision: &ScanDecision) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "# {}", decision.report_fields()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differences() {
        let s = SliceScoreSet::new("s", vec![(0, 0.5), (1, 1.0), (2, 0.0), (3, 0.9), (4, 0.2)]).unwrap();
        let d = paired_differences(&s);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 1.0);
        assert_eq!(d[2], -1.0);
        assert!((d[3] - 0.8).abs() < 1e-12);
        assert!((d[4] + 0.6).abs() < 1e-12);
    }

    #[test]
    fn parse_and_validate() {
        let p = Path::new("scan7.tsv");
        let s = SliceScoreSet::parse("scan7", "3\t0.25\n4\t0.75\n# label=covid q=1 p=0 n=2 method=exact\n", p).unwrap();
        assert_eq!(s.entries(), &[(3, 0.25), (4, 0.75)]);
        assert!(SliceScoreSet::parse("x", "4\t0.2\n3\t0.1\n", p).is_err());
        assert!(SliceScoreSet::parse("x", "1\t1.5\n", p).is_err());
        assert!(SliceScoreSet::parse("x", "1 0.5\n", p).is_err());
        assert!(SliceScoreSet::parse("x", "", p).is_err());
    }
}
