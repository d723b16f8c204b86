//! Run manifest: configuration hash, task timings, warnings and artifact digests.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TaskRecord {
    pub name: String,
    /// `ok`, `failed` or `skipped`.
    pub status: String,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    /// Assumed bound on the lower dynamical degree, taken from the config.
    pub d_star_upper: f64,
    pub cache_hits: Vec<String>,
    pub tasks: Vec<TaskRecord>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<Artifact>,
}

impl RunManifest {
    /// Writes `bytes` under `dir` and records its digest.
    pub fn write_artifact(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        std::fs::write(dir.join(name), bytes)?;
        self.artifacts.push(Artifact { path: name.to_string(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    /// Artifacts whose file content no longer matches the recorded digest.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.artifacts
            .iter()
            .filter(|a| std::fs::read(dir.join(&a.path)).map(|b| sha256_hex(&b) != a.sha256).unwrap_or(true))
            .map(|a| a.path.clone())
            .collect()
    }
}
