//! Atomic file output, input discovery and pairing by file stem.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Runs `write` against a hidden sibling of `path` (same extension, so the
/// format is chosen the same way), then renames it into place.
pub fn atomic<T>(
    path: &Path,
    write: impl FnOnce(&Path) -> Result<T, CliError>,
) -> Result<T, CliError> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| CliError::Failed(format!("bad output path {}", path.display())))?;
    let tmp = path.with_file_name(format!(".tmp-{name}"));
    match write(&tmp) {
        Ok(v) => {
            fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))?;
            Ok(v)
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    atomic(path, |tmp| {
        let mut f = fs::File::create(tmp).map_err(|e| CliError::io(tmp, e))?;
        f.write_all(bytes).map_err(|e| CliError::io(tmp, e))?;
        f.sync_all().map_err(|e| CliError::io(tmp, e))
    })
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CliError> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| CliError::Failed(e.to_string()))?;
        out.push(b'\n');
    }
    write_bytes(path, &out)
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("png" | "pgm")
    )
}

/// Image files of a directory keyed by stem, in sorted order.
pub fn images_by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let hidden = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with('.'));
        if !path.is_file() || hidden || !is_image(&path) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            if let Some(prev) = out.insert(stem.to_string(), path.clone()) {
                log::warn!(
                    "{} and {} share a stem; using the latter",
                    prev.display(),
                    path.display()
                );
            }
        }
    }
    Ok(out)
}

/// Matches files of two directories by stem. Files without a partner are
/// logged and skipped.
pub fn pair_by_stem(
    left: &Path,
    right: &Path,
) -> Result<Vec<(String, PathBuf, PathBuf)>, CliError> {
    let a = images_by_stem(left)?;
    let mut b = images_by_stem(right)?;
    let mut pairs = Vec::new();
    for (stem, pa) in a {
        match b.remove(&stem) {
            Some(pb) => pairs.push((stem, pa, pb)),
            None => log::warn!(
                "no partner for {} in {}; skipped",
                pa.display(),
                right.display()
            ),
        }
    }
    for pb in b.values() {
        log::warn!(
            "no partner for {} in {}; skipped",
            pb.display(),
            left.display()
        );
    }
    Ok(pairs)
}

/// Fails when two roles resolve to the same directory.
pub fn distinct_dirs(dirs: &[(&str, &Path)]) -> Result<(), CliError> {
    let canon = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    for (i, (na, a)) in dirs.iter().enumerate() {
        for (nb, b) in &dirs[i + 1..] {
            if canon(a) == canon(b) {
                return Err(CliError::Config(format!(
                    "{na} and {nb} are the same directory ({}); outputs would collide",
                    a.display()
                )));
            }
        }
    }
    Ok(())
}
