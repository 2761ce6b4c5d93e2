//! Corpus manifests: one record per line, tab-separated
//! `reference.wav [narrowband.wav] split`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub reference: PathBuf,
    pub narrowband: Option<PathBuf>,
    pub split: String,
}

/// Relative paths resolve against the manifest's directory. Blank lines and
/// lines starting with `#` are ignored.
pub fn parse_manifest(text: &str, base: &Path) -> std::result::Result<Vec<ManifestEntry>, String> {
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let entry = match fields.as_slice() {
            [wb] => (wb, None, ""),
            [wb, split] => (wb, None, *split),
            [wb, nb, split] => (wb, Some(*nb).filter(|s| !s.is_empty()), *split),
            _ => return Err(format!("line {}: expected 1 to 3 tab-separated fields", lineno + 1)),
        };
        if entry.0.is_empty() {
            return Err(format!("line {}: empty reference path", lineno + 1));
        }
        out.push(ManifestEntry {
            reference: resolve(entry.0),
            narrowband: entry.1.map(resolve),
            split: entry.2.to_string(),
        });
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base).map_err(|msg| CliError::format(path, msg))
}

/// Entries whose split tag matches, or all of them when `split` is `None`.
pub fn select_split(entries: Vec<ManifestEntry>, split: Option<&str>) -> Vec<ManifestEntry> {
    match split {
        Some(tag) => entries.into_iter().filter(|e| e.split == tag).collect(),
        None => entries,
    }
}

/// Paths are written relative to `base` when they live under it.
pub fn format_manifest(entries: &[ManifestEntry], base: &Path) -> String {
    let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
    let mut out = String::new();
    for e in entries {
        let nb = e.narrowband.as_deref().map(rel).unwrap_or_default();
        writeln!(out, "{}\t{}\t{}", rel(&e.reference), nb, e.split).unwrap();
    }
    out
}
