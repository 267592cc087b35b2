use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Record of one command run, written next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// Every flag value after defaults and `--config` were applied.
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_unix: f64,
    pub finished_unix: f64,
    /// Command-specific results.
    pub summary: Value,
}

impl RunManifest {
    pub fn start(command: &str, config: &impl Serialize) -> CliResult<Self> {
        Ok(Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config)?,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix: unix_now(),
            finished_unix: 0.0,
            summary: Value::Null,
        })
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    /// Stamps the finish time and writes `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path, outputs: &[&Path], summary: Value) -> CliResult<PathBuf> {
        self.outputs = outputs.iter().map(|p| p.to_path_buf()).collect();
        self.summary = summary;
        self.finished_unix = unix_now();
        let path = dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(path.display(), e))?;
        Ok(path)
    }
}
