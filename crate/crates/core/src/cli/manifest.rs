use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::Config;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub toolkit_version: String,
    /// Resolved configuration, file paths made absolute.
    pub config: Config,
    pub config_hash: String,
    pub force: bool,
    pub oracle: bool,
    pub gnuplot_script: bool,
    pub axes: Vec<String>,
    pub metrics: Vec<String>,
    pub seed: u64,
    pub noise_digest: String,
    pub jobs: usize,
    pub outputs: Vec<OutputFile>,
    pub wall_time_s: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

pub fn config_hash(cfg: &Config) -> String {
    let mut h = Sha256::new();
    for (k, v) in &cfg.entries {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}
