//! Run manifests: what a command produced, from which configuration. These
//! are the only artifacts that carry wall-clock timestamps.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atomic::write_json;
use crate::config::{seed_summary, Config};
use crate::error::{BtmError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: serde_json::Value,
    pub artifacts: Vec<ArtifactRecord>,
    /// Human-readable notes such as diverged experts.
    pub notes: Vec<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

pub fn file_sha256(path: &Path) -> Result<(String, u64)> {
    let bytes = std::fs::read(path).map_err(|e| BtmError::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

/// Collects artifacts while a command runs.
#[derive(Debug)]
pub struct ManifestBuilder {
    command: String,
    file_stem: String,
    started: u128,
    artifacts: Vec<PathBuf>,
    notes: Vec<String>,
}

impl ManifestBuilder {
    pub fn start(command: &str) -> Self {
        Self::start_named(command, command)
    }

    /// Like [`ManifestBuilder::start`], written to `manifests/<file_stem>.json`.
    pub fn start_named(command: &str, file_stem: &str) -> Self {
        Self {
            command: command.to_string(),
            file_stem: file_stem.to_string(),
            started: unix_ms(),
            artifacts: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn artifact(&mut self, path: impl Into<PathBuf>) {
        self.artifacts.push(path.into());
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    /// Hashes every artifact (which must exist) and writes
    /// `<output_dir>/manifests/<file_stem>.json`.
    pub fn finish(self, cfg: &Config) -> Result<PathBuf> {
        let mut artifacts = Vec::with_capacity(self.artifacts.len());
        for path in self.artifacts {
            let (sha256, bytes) = file_sha256(&path)?;
            artifacts.push(ArtifactRecord { path, sha256, bytes });
        }
        let manifest = RunManifest {
            command: self.command.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash(),
            seeds: serde_json::to_value(seed_summary(cfg)).expect("seeds serialise"),
            artifacts,
            notes: self.notes,
            started_unix_ms: self.started,
            finished_unix_ms: unix_ms(),
        };
        let path = cfg.output_dir.join("manifests").join(format!("{}.json", self.file_stem));
        write_json(&path, &manifest)?;
        Ok(path)
    }
}
