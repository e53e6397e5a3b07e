//! Run configuration: a single TOML file (plus the global seed) reproduces
//! an entire run. Strategy blocks carry each module's parameters; anything
//! omitted falls back to the module defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::LogRegParams;
use crate::corpus::{BenchmarkSpec, CategoryId, DatasetFormat};
use crate::eval::{GroupAggregation, Strategy};
use crate::features::VocabParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown strategy {0:?} (expected baseline, smote, llm, ease, or alp)")]
    UnknownStrategy(String),
    #[error("dataset file {0} does not exist")]
    MissingDataset(String),
    #[error("referenced resource {0} does not exist")]
    MissingResource(String),
    #[error("llm strategy requires an endpoint (or dry_run = true)")]
    MissingEndpoint,
    #[error("train_fraction {0} is outside (0, 1)")]
    BadTrainFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub format: DatasetFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub stratify_by: Option<CategoryId>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            stratify_by: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeConfig {
    /// Categories with a ratio above this are flagged for augmentation.
    pub flag_threshold: f64,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self { flag_threshold: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub threshold: f64,
    pub class_weighting: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        let p = LogRegParams::default();
        Self {
            learning_rate: p.learning_rate,
            epochs: p.epochs,
            l2: p.l2,
            threshold: p.threshold,
            class_weighting: p.class_weighting,
        }
    }
}

impl ClassifierConfig {
    pub fn to_params(self) -> LogRegParams {
        LogRegParams {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            l2: self.l2,
            threshold: self.threshold,
            class_weighting: self.class_weighting,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub min_df: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        let p = VocabParams::default();
        Self {
            ngram_min: p.ngram_min,
            ngram_max: p.ngram_max,
            min_df: p.min_df,
        }
    }
}

impl FeatureConfig {
    pub fn to_params(self) -> VocabParams {
        VocabParams {
            ngram_min: self.ngram_min,
            ngram_max: self.ngram_max,
            min_df: self.min_df,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoteConfig {
    pub k: usize,
    pub target_ratio: f64,
    /// Explicit category list; defaults to the flagged set.
    pub categories: Option<Vec<CategoryId>>,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k: 5,
            target_ratio: 1.0,
            categories: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EaseConfig {
    pub min_tokens: usize,
    pub min_confidence: f64,
    pub dedup: bool,
    pub target_ratio: f64,
    pub categories: Option<Vec<CategoryId>>,
    /// Acquire-stage labeler override. When omitted it inherits the run's
    /// classifier hyperparameters with class weighting forced on: an
    /// unweighted model collapses to the majority on exactly the categories
    /// worth mining, which would starve the pipeline.
    pub labeler: Option<ClassifierConfig>,
}

impl EaseConfig {
    pub fn resolved_labeler(&self, base: ClassifierConfig) -> ClassifierConfig {
        self.labeler.unwrap_or(ClassifierConfig {
            class_weighting: true,
            ..base
        })
    }
}

impl Default for EaseConfig {
    fn default() -> Self {
        Self {
            min_tokens: 5,
            min_confidence: 0.8,
            dedup: true,
            target_ratio: 1.15,
            categories: None,
            labeler: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlpConfig {
    pub treebank: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub subtree_prob_threshold: f64,
    pub max_swaps: usize,
    pub synonym_rate: f64,
    /// Per-category explicit generation counts; overrides `target_ratio`.
    pub n_targets: Option<BTreeMap<String, usize>>,
    /// Generate until majority/minority reaches this ratio.
    pub target_ratio: f64,
    pub categories: Option<Vec<CategoryId>>,
}

impl Default for AlpConfig {
    fn default() -> Self {
        let p = crate::alp::AlpParams::default();
        Self {
            treebank: None,
            lexicon: None,
            subtree_prob_threshold: p.subtree_prob_threshold,
            max_swaps: p.max_swaps,
            synonym_rate: p.synonym_rate,
            n_targets: None,
            target_ratio: 1.2,
            categories: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmStrategyConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub max_retries: usize,
    pub timeout_secs: u64,
    pub requests_per_minute: usize,
    pub retry_initial_ms: u64,
    pub rate_window_ms: u64,
    pub answers_per_call: usize,
    pub ratio_threshold: f64,
    /// Explicit minority targets per category (paper-style hand-picked
    /// counts); otherwise the ceil rule on `ratio_threshold` applies.
    pub targets: Option<BTreeMap<String, usize>>,
    pub categories: Option<Vec<CategoryId>>,
    pub item_stem: String,
    pub dry_run: bool,
}

impl Default for LlmStrategyConfig {
    fn default() -> Self {
        let c = crate::llm::LlmClientConfig::default();
        Self {
            endpoint: c.endpoint,
            model: c.model,
            api_key_env: c.api_key_env,
            temperature: c.temperature,
            max_retries: c.max_retries,
            timeout_secs: c.timeout_secs,
            requests_per_minute: c.requests_per_minute,
            retry_initial_ms: c.retry_initial_ms,
            rate_window_ms: c.rate_window_ms,
            answers_per_call: 5,
            ratio_threshold: crate::llm::DEFAULT_RATIO_THRESHOLD,
            targets: None,
            categories: None,
            item_stem: "Two carts with negatively charged metal sheets are held in place by wedges. \
                        When the wedges are removed, predict which direction the carts move and when \
                        they stop, and justify your prediction."
                .to_string(),
            dry_run: false,
        }
    }
}

impl LlmStrategyConfig {
    pub fn client_config(&self) -> crate::llm::LlmClientConfig {
        crate::llm::LlmClientConfig {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            temperature: self.temperature,
            max_retries: self.max_retries,
            timeout_secs: self.timeout_secs,
            requests_per_minute: self.requests_per_minute,
            retry_initial_ms: self.retry_initial_ms,
            rate_window_ms: self.rate_window_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    pub aggregation: GroupAggregation,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            aggregation: GroupAggregation::Macro,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub analyze: AnalyzeConfig,
    /// Strategies to run, from {baseline, smote, llm, ease, alp}.
    #[serde(default)]
    pub strategies: Vec<String>,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub smote: SmoteConfig,
    #[serde(default)]
    pub ease: EaseConfig,
    #[serde(default)]
    pub alp: AlpConfig,
    #[serde(default)]
    pub llm: LlmStrategyConfig,
    #[serde(default)]
    pub report: ReportConfig,
    /// Benchmark-generator spec for `gen-benchmark`; omit to use the
    /// bundled cart spec.
    #[serde(default)]
    pub benchmark: Option<BenchmarkSpec>,
}

impl RunConfig {
    pub fn strategy_list(&self) -> Result<Vec<Strategy>, ConfigError> {
        let mut out = Vec::new();
        for s in &self.strategies {
            let parsed: Strategy = s
                .parse()
                .map_err(|_| ConfigError::UnknownStrategy(s.clone()))?;
            if parsed == Strategy::Ft {
                return Err(ConfigError::UnknownStrategy(s.clone()));
            }
            if !out.contains(&parsed) {
                out.push(parsed);
            }
        }
        Ok(out)
    }

    /// Validate everything checkable before running: strategy names, the
    /// train fraction, and that referenced files exist.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let strategies = self.strategy_list()?;
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(ConfigError::BadTrainFraction(self.split.train_fraction));
        }
        if !self.dataset.path.exists() {
            return Err(ConfigError::MissingDataset(self.dataset.path.display().to_string()));
        }
        for resource in [&self.alp.treebank, &self.alp.lexicon].into_iter().flatten() {
            if !resource.exists() {
                return Err(ConfigError::MissingResource(resource.display().to_string()));
            }
        }
        if strategies.contains(&Strategy::Llm) && !self.llm.dry_run && self.llm.endpoint.is_empty() {
            return Err(ConfigError::MissingEndpoint);
        }
        Ok(())
    }
}

/// Parse a config file, returning the config plus the SHA-256 of the raw
/// bytes (the manifest's config fingerprint).
pub fn load_config(path: &Path) -> Result<(RunConfig, String), ConfigError> {
    let bytes = std::fs::read(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let text = String::from_utf8_lossy(&bytes);
    let config: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    Ok((config, crate::rng::sha256_hex(&bytes)))
}
