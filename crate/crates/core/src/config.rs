//! Run configuration: a JSON document validated before any work starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DatasetFormat, SplitRatios};
use crate::eval::Thresholds;
use crate::llm::{LlmEndpoint, MockKind, DEFAULT_HISTORY_CAP};
use crate::models::{HyperParams, ModelKind};

/// Seconds per LLM query for the closed-model latency profile.
pub const CLOSED_MODEL_SECONDS: f64 = 8.0;
/// Seconds per LLM query for the open-model latency profile.
pub const OPEN_MODEL_SECONDS: f64 = 11.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    fn invalid(field: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// Dotted path of the offending field, when known.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { field, .. } => Some(field),
            ConfigError::Io { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Directory holding the ratings and item files.
    pub path: PathBuf,
    pub format: DatasetFormat,
    #[serde(default)]
    pub min_interactions: usize,
    /// Overrides the format's ratings file name.
    #[serde(default)]
    pub ratings_file: Option<String>,
    /// Overrides the format's item file name.
    #[serde(default)]
    pub items_file: Option<String>,
}

impl DatasetConfig {
    pub fn ratings_path(&self) -> PathBuf {
        let (ratings, _) = self.format.file_names();
        self.path.join(self.ratings_file.as_deref().unwrap_or(ratings))
    }

    pub fn items_path(&self) -> PathBuf {
        let (_, items) = self.format.file_names();
        self.path.join(self.items_file.as_deref().unwrap_or(items))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Train, validation, test.
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratios: [0.8, 0.1, 0.1],
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Search the standard grid instead of using `hyperparameters` as given.
    #[serde(default)]
    pub grid: bool,
    #[serde(default)]
    pub hyperparameters: HyperParams,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TsMode {
    /// Mean sparsity index over all users.
    #[default]
    Auto,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub t_p: f64,
    pub t_s_mode: TsMode,
    /// Required when `t_s_mode` is fixed.
    pub t_s: Option<f64>,
    /// Defaults to the dataset format's cutoff.
    pub relevance_cutoff: Option<f64>,
    pub n_sampled_negatives: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            t_p: 0.5,
            t_s_mode: TsMode::Auto,
            t_s: None,
            relevance_cutoff: None,
            n_sampled_negatives: 100,
        }
    }
}

impl ThresholdConfig {
    /// Concrete thresholds given the auto density threshold.
    pub fn resolve(&self, format: DatasetFormat, auto_t_s: f64) -> Thresholds {
        Thresholds {
            t_p: self.t_p,
            t_s: match self.t_s_mode {
                TsMode::Auto => auto_t_s,
                TsMode::Fixed => self.t_s.expect("validated"),
            },
            relevance_cutoff: self.relevance_cutoff.unwrap_or(format.default_relevance_cutoff()),
            n_sampled_negatives: self.n_sampled_negatives,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmMode {
    #[default]
    Mock,
    Endpoint,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatencyProfile {
    #[default]
    Closed,
    Open,
}

impl LatencyProfile {
    pub fn seconds(self) -> f64 {
        match self {
            LatencyProfile::Closed => CLOSED_MODEL_SECONDS,
            LatencyProfile::Open => OPEN_MODEL_SECONDS,
        }
    }
}

/// Which items a weak user's prompt asks the model to rank.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    /// The user's held-out test items.
    #[default]
    TestItems,
    /// The conventional model's top-n items among those the user never trained on.
    RsTopN(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    #[serde(default)]
    pub mode: LlmMode,
    #[serde(default)]
    pub mock: Option<MockKind>,
    #[serde(default)]
    pub endpoint: Option<LlmEndpoint>,
    #[serde(default = "default_history_cap")]
    pub history_cap: usize,
    #[serde(default)]
    pub latency_profile: LatencyProfile,
    /// Overrides the profile's per-query seconds in the cost block.
    #[serde(default)]
    pub per_query_seconds: Option<f64>,
    #[serde(default)]
    pub candidates: CandidateSource,
}

fn default_history_cap() -> usize {
    DEFAULT_HISTORY_CAP
}

impl LlmConfig {
    pub fn per_query_seconds(&self) -> f64 {
        self.per_query_seconds.unwrap_or(self.latency_profile.seconds())
    }

    /// Short name used in summaries, e.g. `mock-oracle` or the endpoint model.
    pub fn label(&self) -> String {
        match self.mode {
            LlmMode::Mock => self.mock.as_ref().map_or_else(|| "mock".into(), MockKind::label),
            LlmMode::Endpoint => self.endpoint.as_ref().map_or_else(|| "endpoint".into(), |e| e.model_name.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMode {
    /// Keep whichever list scores better on the held-out labels.
    #[default]
    Evaluation,
    /// Serve the model's list to every weak user.
    Deployment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub train: u64,
    /// History sampling and candidate shuffling in prompts.
    pub shuffle: u64,
    /// Sampled negatives in evaluation pools.
    pub negatives: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            train: 1,
            shuffle: 2,
            negatives: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub thresholds: ThresholdConfig,
    pub llm: LlmConfig,
    #[serde(default)]
    pub merge_mode: MergeMode,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seeds: Seeds,
}

impl RunConfig {
    /// Parses and validates; relative paths stay relative.
    pub fn from_json(text: &str) -> Result<RunConfig, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            ConfigError::Invalid {
                field: if field == "." { "config".into() } else { field },
                message: e.into_inner().to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config = RunConfig::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.dataset.path = base.join(&config.dataset.path);
        config.output_dir = base.join(&config.output_dir);
        Ok(config)
    }

    /// Sets every seed to `seed`.
    pub fn override_seeds(&mut self, seed: u64) {
        self.split.seed = seed;
        self.seeds = Seeds {
            train: seed,
            shuffle: seed,
            negatives: seed,
        };
    }

    pub fn split_ratios(&self) -> SplitRatios {
        let [train, validation, test] = self.split.ratios;
        SplitRatios { train, validation, test }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let th = &self.thresholds;
        if !(0.0..=1.0).contains(&th.t_p) {
            return Err(ConfigError::invalid("thresholds.t_p", format!("must be in [0, 1], got {}", th.t_p)));
        }
        match (th.t_s_mode, th.t_s) {
            (TsMode::Fixed, None) => return Err(ConfigError::invalid("thresholds.t_s", "required when t_s_mode is fixed")),
            (TsMode::Fixed, Some(t)) if !(t > 0.0 && t < 1.0) => {
                return Err(ConfigError::invalid("thresholds.t_s", format!("must be in (0, 1), got {t}")))
            }
            _ => {}
        }
        if let Some(c) = th.relevance_cutoff {
            let scale = self.dataset.format.rating_scale();
            if !scale.contains(c) {
                return Err(ConfigError::invalid(
                    "thresholds.relevance_cutoff",
                    format!("{c} is outside the rating scale {}..{}", scale.min, scale.max),
                ));
            }
        }
        SplitRatios::new(self.split.ratios[0], self.split.ratios[1], self.split.ratios[2])
            .map_err(|e| ConfigError::invalid("split.ratios", e.to_string()))?;
        if !self.model.grid {
            self.model
                .hyperparameters
                .validate(self.model.kind)
                .map_err(|e| ConfigError::invalid("model.hyperparameters", e.to_string()))?;
        }
        let llm = &self.llm;
        if llm.history_cap < 1 {
            return Err(ConfigError::invalid("llm.history_cap", "must be at least 1"));
        }
        if let Some(s) = llm.per_query_seconds {
            if !(s > 0.0) {
                return Err(ConfigError::invalid("llm.per_query_seconds", "must be positive"));
            }
        }
        if llm.candidates == CandidateSource::RsTopN(0) {
            return Err(ConfigError::invalid("llm.candidates.rs_top_n", "must be at least 1"));
        }
        match llm.mode {
            LlmMode::Mock => match &llm.mock {
                None => return Err(ConfigError::invalid("llm.mock", "required when mode is mock")),
                Some(MockKind::NoisyOracle { p }) if !(0.0..=1.0).contains(p) => {
                    return Err(ConfigError::invalid("llm.mock.p", "must be in [0, 1]"))
                }
                _ => {}
            },
            LlmMode::Endpoint => match &llm.endpoint {
                None => return Err(ConfigError::invalid("llm.endpoint", "required when mode is endpoint")),
                Some(ep) => ep.validate().map_err(|e| ConfigError::invalid("llm.endpoint", e.to_string()))?,
            },
        }
        Ok(())
    }
}
