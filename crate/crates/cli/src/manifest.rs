//! Run manifests: enough to reproduce every artifact of a run.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::StageSeeds;

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// Hash of the config text exactly as read.
    pub config_sha256: Option<String>,
    pub config_text: Option<String>,
    pub seed: u64,
    pub stage_seeds: Option<StageSeeds>,
    /// Command-line values that override the config.
    pub arguments: Vec<(String, String)>,
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(role: &str, path: &Path) -> anyhow::Result<FileDigest> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(FileDigest { name: role.to_string(), sha256: sha256_hex(&bytes) })
}

impl Manifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: None,
            config_text: None,
            seed,
            stage_seeds: None,
            arguments: Vec::new(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn with_config(mut self, text: &str, seeds: StageSeeds) -> Self {
        self.config_sha256 = Some(sha256_hex(text.as_bytes()));
        self.config_text = Some(text.to_string());
        self.stage_seeds = Some(seeds);
        self
    }

    /// Hashes the artifacts and writes `manifest_<command>.json` next to them.
    pub fn write(mut self, dir: &Path, artifacts: &[String]) -> anyhow::Result<String> {
        for name in artifacts {
            self.artifacts.push(digest_file(name, &dir.join(name))?);
        }
        let name = format!("manifest_{}.json", self.command);
        crate::commands::write_json(dir, &name, &self)?;
        Ok(name)
    }
}
