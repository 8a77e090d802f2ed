//! TOML run configuration. Every section and field is optional; command-line
//! flags override whatever the file sets.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use meme_virality::collector::{CollectorError, PollSchedule, PollTier, RetryPolicy};
use meme_virality::experiments::ExperimentConfig;
use meme_virality::synth::SynthConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub experiment: ExperimentConfig,
    pub synth: SynthConfig,
    pub collect: CollectConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectConfig {
    pub until_minutes: f64,
    pub retry: RetryPolicy,
    /// Polling tiers; empty means the default schedule.
    pub tiers: Vec<PollTier>,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self { until_minutes: 1440.0, retry: RetryPolicy::default(), tiers: Vec::new() }
    }
}

impl CollectConfig {
    pub fn schedule(&self) -> Result<PollSchedule, CollectorError> {
        if self.tiers.is_empty() {
            Ok(PollSchedule::default())
        } else {
            PollSchedule::new(self.tiers.clone())
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.to_owned(), source })
    }
}
