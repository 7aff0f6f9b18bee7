use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Provenance of a command's artifacts. Contains no timestamps, so identical
/// runs write identical manifests.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub tool_version: &'a str,
    pub model_format_version: u32,
    pub config_sha256: String,
    pub config: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

pub fn config_hash(cfg: &RunConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_text().as_bytes()))
}

pub fn write(dir: &Path, command: &str, cfg: &RunConfig, inputs: &[&Path], outputs: &[&str]) -> Result<()> {
    let manifest = Manifest {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        model_format_version: lactr::dump::DUMP_VERSION,
        config_sha256: config_hash(cfg),
        config: cfg.to_text(),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}
