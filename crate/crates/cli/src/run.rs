//! Run directories and their manifest.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rail_core::io::sha256_hex;

use crate::Usage;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.json";
pub const METRICS: &str = "metrics.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CHECKPOINT: &str = "final.rckp";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    /// Path relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config_digest: String,
    pub tool_version: String,
    pub algo: String,
    /// False when training stopped before the configured iteration count.
    pub complete: bool,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub artifacts: Vec<Artifact>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Creates `dir` with its initial files in one rename, so a run directory
/// either exists complete or not at all.
pub fn create_run_dir(dir: &Path, files: &[(&str, &[u8])]) -> Result<()> {
    if dir.exists() {
        bail!(Usage(format!("{} already exists (use --resume to continue it)", dir.display())));
    }
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent).with_context(|| format!("cannot create {}", parent.display()))?;
    let name = dir.file_name().context("output path has no final component")?.to_string_lossy();
    let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    std::fs::create_dir(&staging).with_context(|| format!("cannot create {}", staging.display()))?;
    std::fs::create_dir(staging.join(CHECKPOINT_DIR))?;
    for (file, bytes) in files {
        std::fs::write(staging.join(file), bytes)?;
    }
    std::fs::rename(&staging, dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(())
}

pub fn checkpoint_name(iteration: u64) -> String {
    format!("{CHECKPOINT_DIR}/iter-{iteration:06}.rckp")
}

/// Periodic checkpoints of a run, sorted by iteration.
pub fn list_checkpoints(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    let cdir = dir.join(CHECKPOINT_DIR);
    if !cdir.is_dir() {
        return Ok(out);
    }
    for entry in std::fs::read_dir(&cdir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(iter) = name.strip_prefix("iter-").and_then(|s| s.strip_suffix(".rckp")) {
            if let Ok(i) = iter.parse::<u64>() {
                out.push((i, path));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Hashes every regular file under `dir` except the manifest itself.
pub fn inventory(dir: &Path) -> Result<Vec<Artifact>> {
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<Artifact>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(root, &path, out)?;
            continue;
        }
        let rel = path.strip_prefix(root)?;
        let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if rel == MANIFEST {
            continue;
        }
        out.push(Artifact { sha256: sha256_hex(&std::fs::read(&path)?), path: rel });
    }
    Ok(())
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(dir.join(MANIFEST), text)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Usage(format!("{}: {e}", path.display())).into())
}
