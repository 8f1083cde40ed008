use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Serialize)]
pub struct DatasetInfo {
    pub path: PathBuf,
    pub fingerprint: String,
}

/// Everything needed to reproduce a command's outputs.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub dataset: Option<DatasetInfo>,
    pub artifacts: BTreeMap<String, PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: impl Serialize) -> Result<Self, CliError> {
        Ok(RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config: serde_json::to_value(config).map_err(|e| CliError::failure(e.to_string()))?,
            seeds: BTreeMap::new(),
            dataset: None,
            artifacts: BTreeMap::new(),
        })
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.into(), value);
        self
    }

    pub fn artifact(mut self, name: &str, path: PathBuf) -> Self {
        self.artifacts.insert(name.into(), path);
        self
    }

    /// Creates `out` and writes the manifest through a temporary file, so
    /// an interrupted write never leaves a truncated manifest behind.
    pub fn write(&self, out: &Path) -> Result<PathBuf, CliError> {
        let io = |p: &Path, e: std::io::Error| CliError::usage(format!("{}: {e}", p.display()));
        fs::create_dir_all(out).map_err(|e| io(out, e))?;
        let path = out.join(MANIFEST_FILE);
        let tmp = out.join(format!(".{MANIFEST_FILE}.tmp"));
        let text =
            serde_json::to_string_pretty(self).map_err(|e| CliError::failure(e.to_string()))?;
        fs::write(&tmp, text + "\n").map_err(|e| io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| io(&path, e))?;
        Ok(path)
    }
}
