//! Run manifest: per-stage input/output artifact hashes that chain a whole
//! run together. Re-running a stage whose inputs and outputs still match is
//! a no-op; artifacts from interrupted stages stay flagged incomplete.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::sha256_hex;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path} is malformed: {message}")]
    Malformed { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageState {
    /// Never ran.
    Missing,
    /// Ran with different inputs, or never finished.
    Stale,
    /// Completed and every output hash still matches.
    Current,
    /// Completed, but an output file no longer matches its recorded hash.
    OutputsTampered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub completed: bool,
    /// Named input fingerprints (config hash, upstream artifact hashes,
    /// the effective seed).
    pub inputs: BTreeMap<String, String>,
    /// Output path (relative to the run directory) -> content hash.
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub stages: BTreeMap<String, StageRecord>,
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(config_hash: &str, seed: u64) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.to_string(),
            seed,
            stages: BTreeMap::new(),
        }
    }

    pub fn path_in(out_dir: &Path) -> PathBuf {
        out_dir.join("manifest.json")
    }

    pub fn load_or_new(out_dir: &Path, config_hash: &str, seed: u64) -> Result<Self, ManifestError> {
        let path = Self::path_in(out_dir);
        if !path.exists() {
            return Ok(Self::new(config_hash, seed));
        }
        let content = fs::read_to_string(&path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let loaded: Self = serde_json::from_str(&content).map_err(|e| ManifestError::Malformed {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if loaded.config_hash != config_hash || loaded.seed != seed {
            // Different run parameters invalidate previous stages.
            return Ok(Self::new(config_hash, seed));
        }
        Ok(loaded)
    }

    pub fn save(&self, out_dir: &Path) -> Result<(), ManifestError> {
        let path = Self::path_in(out_dir);
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, body).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// True when the stage already completed with identical inputs and every
    /// recorded output still hashes to the recorded value.
    pub fn stage_is_current(&self, out_dir: &Path, stage: &str, inputs: &BTreeMap<String, String>) -> bool {
        self.stage_state(out_dir, stage, inputs) == StageState::Current
    }

    /// Distinguish "never ran / inputs changed" from "ran, but the recorded
    /// outputs no longer match what is on disk" (tampering).
    pub fn stage_state(&self, out_dir: &Path, stage: &str, inputs: &BTreeMap<String, String>) -> StageState {
        let Some(record) = self.stages.get(stage) else {
            return StageState::Missing;
        };
        if !record.completed || &record.inputs != inputs {
            return StageState::Stale;
        }
        let outputs_match = record.outputs.iter().all(|(rel, hash)| {
            fs::read(out_dir.join(rel))
                .map(|bytes| sha256_hex(&bytes) == *hash)
                .unwrap_or(false)
        });
        if outputs_match {
            StageState::Current
        } else {
            StageState::OutputsTampered
        }
    }

    /// Mark a stage as started (incomplete) and persist immediately, so an
    /// interrupted run leaves the partial stage visible.
    pub fn stage_begin(
        &mut self,
        out_dir: &Path,
        stage: &str,
        inputs: BTreeMap<String, String>,
    ) -> Result<(), ManifestError> {
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                completed: false,
                inputs,
                outputs: BTreeMap::new(),
                warnings: Vec::new(),
                started_unix_ms: now_ms(),
                finished_unix_ms: None,
            },
        );
        self.save(out_dir)
    }

    pub fn stage_finish(
        &mut self,
        out_dir: &Path,
        stage: &str,
        outputs: BTreeMap<String, String>,
        warnings: Vec<String>,
    ) -> Result<(), ManifestError> {
        let record = self.stages.get_mut(stage).expect("stage_begin first");
        record.completed = true;
        record.outputs = outputs;
        record.warnings = warnings;
        record.finished_unix_ms = Some(now_ms());
        self.save(out_dir)
    }

    /// All artifact hashes across stages, keyed `stage:relpath`. Timestamps
    /// are excluded, so two runs with identical outputs compare equal.
    pub fn artifact_hashes(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        for (stage, record) in &self.stages {
            for (rel, hash) in &record.outputs {
                out.insert(format!("{stage}:{rel}"), hash.clone());
            }
        }
        out
    }

    pub fn warnings(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (stage, record) in &self.stages {
            for w in &record.warnings {
                out.push((stage.clone(), w.clone()));
            }
        }
        out
    }
}

/// Write a file and return its (relative path, hash) pair for the manifest.
pub fn write_artifact(
    out_dir: &Path,
    rel: &str,
    bytes: &[u8],
) -> Result<(String, String), ManifestError> {
    let path = out_dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| ManifestError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    fs::write(&path, bytes).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok((rel.to_string(), sha256_hex(bytes)))
}

pub fn hash_file(path: &Path) -> Result<String, ManifestError> {
    let bytes = fs::read(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(sha256_hex(&bytes))
}
