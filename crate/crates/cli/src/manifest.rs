//! Run manifests. Kept in a sidecar file so the reports themselves stay
//! byte-identical across reruns; only the timestamps here differ.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::io::write_text;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Full argument vector after the program name.
    pub arguments: Vec<String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<LambdaRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub significance: Option<f64>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum LambdaRecord {
    Fixed { value: f64 },
    Grid { values: Vec<f64> },
    Default { points: usize, n_train: usize },
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &'static str, started_unix_ms: u128) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            arguments: std::env::args().skip(1).collect(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            family: None,
            lambda: None,
            rho: None,
            epsilon: None,
            significance: None,
            started_unix_ms,
            finished_unix_ms: started_unix_ms,
        }
    }

    pub fn write(mut self, path: &Path) -> CliResult<()> {
        self.finished_unix_ms = now_ms();
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::Write {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        write_text(path, &(text + "\n"))
    }
}

/// `report.csv` → `report.csv.<suffix>`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
