//! Run manifests: one JSON file per command invocation recording what went
//! in, what came out and under which configuration.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    /// sha256 of the compact JSON encoding of `config`.
    pub config_digest: String,
    pub seed: Option<u64>,
    /// Plan file used, or the SLM digest when the plan was built in-process.
    pub plan: Option<String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_s: u64,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize) -> anyhow::Result<Self> {
        let config = serde_json::to_value(config)?;
        let digest = hex::encode(Sha256::digest(serde_json::to_vec(&config)?));
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config,
            config_digest: digest,
            seed: None,
            plan: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            wall_time_s: 0.0,
        })
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// `<output>.manifest.json` beside the primary output.
pub fn default_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    primary.with_file_name(name)
}
