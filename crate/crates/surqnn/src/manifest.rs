//! Run manifest: what was run, from which tree, and what it produced.

use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Config,
    pub config_hash: String,
    pub git_describe: String,
    pub seed: u64,
    pub started: String,
    pub finished: Option<String>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<ParameterCounts>,
}

/// Trainable sizes of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCounts {
    /// Compressor, projector and head.
    pub classical: usize,
    pub circuit_angles: usize,
    pub surrogate: usize,
}

/// `git describe --always --dirty`, or `"unknown"` outside a work tree.
pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: &str, config: &Config, outputs: Vec<String>) -> Self {
        RunManifest {
            command: command.into(),
            config: config.clone(),
            config_hash: config.hash(),
            git_describe: git_describe(),
            seed: config.seed,
            started: now(),
            finished: None,
            outputs,
            parameters: None,
        }
    }

    pub fn finish(&mut self) {
        self.finished = Some(now());
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| CliError::Format(e.to_string()))?;
        crate::idx::write_file(path, &json)
    }
}
