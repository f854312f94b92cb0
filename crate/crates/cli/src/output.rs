//! CSV artifacts and run manifests.
//!
//! Outputs are rendered to memory first and only written once a run has
//! succeeded, so a failing run leaves no partial files behind.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// An artifact waiting to be written.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Builds one CSV in memory.
pub fn csv<F>(name: &str, header: &[&str], fill: F) -> Result<Artifact, csv::Error>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    fill(&mut w)?;
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(Artifact {
        name: name.to_string(),
        bytes,
    })
}

/// Shortest round-trip representation, so reruns are byte-identical.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Resolved configuration, replayable with `--config`.
    pub config: Option<String>,
    pub threads: usize,
    pub wall_time_s: f64,
    pub summary: serde_json::Value,
    pub outputs: Vec<OutputDigest>,
}

/// Writes every artifact plus `manifest.json` into `dir`.
pub fn write_all(dir: &Path, artifacts: &[Artifact], mut manifest: Manifest) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for a in artifacts {
        let path = dir.join(&a.name);
        fs::write(&path, &a.bytes)?;
        manifest.outputs.push(OutputDigest {
            file: a.name.clone(),
            sha256: sha256_hex(&a.bytes),
            bytes: a.bytes.len(),
        });
        written.push(path);
    }
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest).map_err(std::io::Error::other)?)?;
    written.push(path);
    Ok(written)
}
