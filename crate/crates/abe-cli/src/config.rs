//! TOML run configuration. Command-line flags override file values, which
//! override the built-in defaults.

use std::path::Path;

use abe_core::features::FeatureConfig;
use abe_core::pipeline::ExtensionConfig;
use abe_core::regressor::{GmmConfig, TrainConfig};
use abe_core::synth::SynthConfig;
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub files: usize,
    /// Share of files tagged `test`; the rest are `train`.
    pub test_fraction: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            files: 10,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub corpus: CorpusConfig,
    pub utterance: SynthConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub gmm: GmmConfig,
    pub extend: ExtensionConfig,
}

impl FileConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::format(path, e.message()))
    }
}
