use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

/// Provenance record written next to every set of outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub software: String,
    pub version: String,
    pub seed: u64,
    /// SHA-256 of the effective configuration as canonical JSON.
    pub config_digest: String,
    /// SHA-256 of each input file, in argument order.
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub struct ManifestBuilder {
    command: Vec<String>,
    seed: u64,
    config_digest: String,
    inputs: Vec<InputDigest>,
    started_at: String,
}

impl ManifestBuilder {
    pub fn new<C: Serialize>(argv: &[String], seed: u64, config: &C) -> CliResult<Self> {
        let canonical =
            serde_json::to_vec(config).map_err(|e| CliError::validation(format!("cannot serialize config: {e}")))?;
        Ok(Self {
            command: argv.to_vec(),
            seed,
            config_digest: sha256_hex(&canonical),
            inputs: Vec::new(),
            started_at: now(),
        })
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn finish(self, outputs: &[&str]) -> RunManifest {
        RunManifest {
            command: self.command,
            software: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config_digest: self.config_digest,
            inputs: self.inputs,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            started_at: self.started_at,
            finished_at: now(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::validation(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::validation(format!("cannot create {}: {e}", dir.display())))
}
