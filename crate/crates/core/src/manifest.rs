//! Line-delimited JSON manifests and the group manifest record.
//!
//! Paths inside manifests are stored relative to the manifest's directory
//! whenever possible so that the bytes do not depend on where a run lives.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reads every non-empty line of a JSONL file.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Writes `items` as JSONL, replacing the file.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).expect("manifest records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `path` relative to `base` when it lies beneath it, else unchanged.
pub fn relative_to(path: &Path, base: &Path) -> String {
    let p = path.strip_prefix(base).unwrap_or(path);
    p.to_string_lossy().replace('\\', "/")
}

/// Joins a manifest-relative path onto the manifest's directory.
pub fn resolve(base: &Path, stored: &str) -> PathBuf {
    let p = Path::new(stored);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Directory that relative paths in the manifest at `manifest` refer to.
pub fn manifest_dir(manifest: &Path) -> PathBuf {
    match manifest.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupScores {
    pub std_image: f64,
    pub std_highfreq: f64,
    /// Mean absolute difference of each variant from the original, in model order.
    pub differences: Vec<f64>,
}

/// One annotation-ready patch group as written by `make-groups`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub group_id: String,
    /// Full-size source image the patch was cut from.
    pub source: String,
    pub x: usize,
    pub y: usize,
    pub size: usize,
    /// The original HR patch.
    pub original: String,
    /// Enhanced patches, parallel to `model_ids`.
    pub variants: Vec<String>,
    pub model_ids: Vec<u8>,
    pub scores: GroupScores,
}

impl GroupRecord {
    /// Path of the variant produced by `model_id`.
    pub fn variant_path(&self, model_id: u8) -> Option<&str> {
        self.model_ids
            .iter()
            .position(|&m| m == model_id)
            .map(|i| self.variants[i].as_str())
    }
}

/// Loads a group manifest and resolves its paths to absolute-or-cwd-relative ones.
pub fn load_groups(path: impl AsRef<Path>) -> Result<Vec<GroupRecord>> {
    let path = path.as_ref();
    let base = manifest_dir(path);
    let mut groups: Vec<GroupRecord> = read_jsonl(path)?;
    for g in &mut groups {
        g.source = resolve(&base, &g.source).to_string_lossy().into_owned();
        g.original = resolve(&base, &g.original).to_string_lossy().into_owned();
        for v in &mut g.variants {
            *v = resolve(&base, v).to_string_lossy().into_owned();
        }
        if g.variants.len() != g.model_ids.len() {
            return Err(Error::Config(format!(
                "group {} lists {} variants but {} model ids",
                g.group_id,
                g.variants.len(),
                g.model_ids.len()
            )));
        }
    }
    Ok(groups)
}
