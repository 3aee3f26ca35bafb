//! TOML run configuration. Every section and key is optional.
//!
//! ```toml
//! [pipeline]
//! seed = 42
//!
//! [harvest]
//! date_start = "2019-01-01"
//! date_end = "2021-12-31"
//!
//! [gate]
//! mode = "dual"
//!
//! [build]
//! input_cap = 1000
//!
//! [decode]
//! num_beams = 2
//!
//! [embedding]
//! provider = "hash"
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::corpusbuild::BuildOptions;
use crate::harvest::HarvestConfig;
use crate::semgate::{GateConfig, ProviderSet};
use crate::summarize::{DecodeParams, DEFAULT_LEAD_K};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub pipeline: PipelineConfig,
    pub harvest: HarvestConfig,
    pub gate: GateConfig,
    pub build: BuildOptions,
    pub decode: DecodeParams,
    pub embedding: EmbeddingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed for the split shuffle and human-eval sampling.
    pub seed: u64,
    pub lead_k: usize,
    /// In-flight requests to the summarization backend.
    pub max_concurrent_requests: usize,
    pub stats_top_k: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { seed: 42, lead_k: DEFAULT_LEAD_K, max_concurrent_requests: 4, stats_top_k: 17 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Deterministic hashed bag-of-words vectors; needs no model.
    Hash,
    /// Model server `/embed` endpoint.
    Remote,
}

impl FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "hash" => Ok(ProviderKind::Hash),
            "remote" => Ok(ProviderKind::Remote),
            other => Err(format!("unknown provider {other:?} (expected hash or remote)")),
        }
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderKind::Hash => "hash",
            ProviderKind::Remote => "remote",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider: ProviderKind,
    /// Seed of the hash provider.
    pub seed: u64,
    /// Model server root, used by remote embedding and summarization.
    pub backend_url: Option<String>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self { provider: ProviderKind::Hash, seed: 7, backend_url: None }
    }
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Config> {
        let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&raw).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(raw: &str) -> anyhow::Result<Config> {
        let cfg: Config = toml::from_str(raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.harvest.validate()?;
        self.gate.validate()?;
        self.decode.validate()?;
        if self.pipeline.lead_k == 0 {
            bail!("pipeline.lead_k must be positive");
        }
        if self.pipeline.max_concurrent_requests == 0 {
            bail!("pipeline.max_concurrent_requests must be positive");
        }
        if self.build.input_cap == 0 || self.build.summary_cap == 0 {
            bail!("build.input_cap and build.summary_cap must be positive");
        }
        if self.embedding.provider == ProviderKind::Remote && self.embedding.backend_url.is_none() {
            bail!("embedding.provider = \"remote\" needs embedding.backend_url");
        }
        Ok(())
    }

    pub fn providers(&self) -> ProviderSet {
        match (&self.embedding.provider, &self.embedding.backend_url) {
            (ProviderKind::Remote, Some(url)) => ProviderSet::remote(url),
            _ => ProviderSet::hash(self.embedding.seed),
        }
    }
}
