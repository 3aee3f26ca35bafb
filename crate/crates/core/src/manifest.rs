//! Per-run manifest written next to each command's output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::jsonl::{write_json, JsonlError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Config,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub counts: BTreeMap<String, usize>,
    pub failures: usize,
    pub exit_code: Option<i32>,
}

impl RunManifest {
    pub fn start(command: &str, config: &Config) -> Self {
        Self {
            command: command.to_string(),
            config: config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            started_at: Utc::now(),
            finished_at: None,
            counts: BTreeMap::new(),
            failures: 0,
            exit_code: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    pub fn count(&mut self, key: &str, n: usize) -> &mut Self {
        self.counts.insert(key.to_string(), n);
        self
    }

    /// Stamp the end time and exit code, then write atomically.
    pub fn finish(&mut self, exit_code: i32, path: &Path) -> Result<(), JsonlError> {
        self.finished_at = Some(Utc::now());
        self.exit_code = Some(exit_code);
        write_json(path, self)
    }
}

/// `<dir>/manifest.json` for a directory output, otherwise
/// `<file>.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    if output.is_dir() {
        return output.join("manifest.json");
    }
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}
