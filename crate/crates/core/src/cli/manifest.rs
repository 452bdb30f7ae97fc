//! Run manifests.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_COPY: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_sha256: String,
    pub seed: u64,
    pub parallel: bool,
    pub wall_time_seconds: f64,
    /// Sorted by path.
    pub artifacts: Vec<ArtifactEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn entry(path: &str, bytes: &[u8]) -> ArtifactEntry {
        ArtifactEntry {
            path: path.to_string(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        }
    }
}

/// Result of re-reading a run directory.
#[derive(Debug, Clone, Serialize)]
pub struct ManifestCheck {
    pub manifest: Manifest,
    pub config_matches: bool,
    /// Artifacts whose bytes no longer match the recorded hash.
    pub mismatched: Vec<String>,
}

/// Loads `manifest.json` from `dir` and re-hashes the config copy and every
/// recorded artifact.
pub fn read_manifest(dir: &Path) -> Result<ManifestCheck> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::InvalidParameter(format!(
            "{} is not a completed run: {} is missing",
            dir.display(),
            MANIFEST_FILE
        )));
    }
    let manifest: Manifest = serde_json::from_slice(&fs::read(&path)?)
        .map_err(|e| Error::InvalidParameter(format!("unreadable manifest: {e}")))?;
    let config_matches = fs::read(dir.join(CONFIG_COPY))
        .map(|b| sha256_hex(&b) == manifest.config_sha256)
        .unwrap_or(false);
    let mismatched = manifest
        .artifacts
        .iter()
        .filter(|a| fs::read(dir.join(&a.path)).map_or(true, |b| sha256_hex(&b) != a.sha256))
        .map(|a| a.path.clone())
        .collect();
    Ok(ManifestCheck {
        manifest,
        config_matches,
        mismatched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
