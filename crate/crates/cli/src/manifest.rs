//! Run manifest: what ran, with which settings, and what it wrote.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use facefit::{Error, Result};

#[derive(Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    /// SHA-256 of the effective config as JSON.
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub deterministic: bool,
    pub artifacts: Vec<Artifact>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_seconds: Option<f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(config: &serde_json::Value) -> String {
    sha256_hex(config.to_string().as_bytes())
}

/// Hash every listed artifact under `dir` and write `manifest.json`.
pub fn write(dir: &Path, mut m: Manifest, files: &[String]) -> Result<()> {
    for f in files {
        let p = dir.join(f);
        let bytes = fs::read(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
        m.artifacts.push(Artifact { file: f.clone(), sha256: sha256_hex(&bytes) });
    }
    let p = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    fs::write(&p, text).map_err(|e| Error::Io { path: p, source: e })
}
