//! Pipeline configuration: a strict TOML file (unknown keys rejected) plus
//! environment variables for provider credentials.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::augment::{AugmentOptions, AugmentationPolicy};
use crate::corpus::{ClassCounts, Source};
use crate::model::ModelConfig;
use crate::train::{OptimizerKind, TrainConfig};

pub const PROVIDER_URL_ENV: &str = "TASKAUTO_PROVIDER_URL";
pub const PROVIDER_TOKEN_ENV: &str = "TASKAUTO_PROVIDER_TOKEN";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub paths: PathsSection,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub augment: AugmentSection,
    #[serde(default)]
    pub provider: ProviderSection,
    #[serde(default)]
    pub tokenizer: TokenizerSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub tasks: PathBuf,
    pub votes: PathBuf,
    pub occupations: PathBuf,
    pub industries: PathBuf,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    #[serde(default = "default_source")]
    pub source: String,
    #[serde(default = "default_vote_threshold")]
    pub vote_threshold: u32,
}

fn default_source() -> String {
    "synthetic".into()
}

fn default_vote_threshold() -> u32 {
    4
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            source: default_source(),
            vote_threshold: default_vote_threshold(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "default_ratios")]
    pub ratios: [f64; 3],
}

fn default_ratios() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            ratios: default_ratios(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSection {
    #[serde(default = "default_mode")]
    pub mode: String,
    pub multiplier: Option<f64>,
    pub targets: Option<TargetsSection>,
    #[serde(default = "default_similarity_floor")]
    pub similarity_floor: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsSection {
    pub substitution: usize,
    pub complementarity: usize,
    pub negligibility: usize,
}

fn default_mode() -> String {
    "original".into()
}

fn default_similarity_floor() -> f64 {
    0.5
}

fn default_temperature() -> f64 {
    0.7
}

fn default_max_rounds() -> usize {
    5
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            multiplier: None,
            targets: None,
            similarity_floor: default_similarity_floor(),
            temperature: default_temperature(),
            max_rounds: default_max_rounds(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSection {
    #[serde(default = "default_provider_kind")]
    pub kind: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_provider_kind() -> String {
    "mock".into()
}

fn default_timeout_secs() -> u64 {
    30
}

fn default_retries() -> u32 {
    2
}

impl Default for ProviderSection {
    fn default() -> Self {
        Self {
            kind: default_provider_kind(),
            timeout_secs: default_timeout_secs(),
            retries: default_retries(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerSection {
    #[serde(default = "default_max_vocab")]
    pub max_vocab: usize,
    #[serde(default = "default_min_freq")]
    pub min_freq: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

fn default_max_vocab() -> usize {
    2000
}

fn default_min_freq() -> usize {
    1
}

fn default_max_len() -> usize {
    64
}

impl Default for TokenizerSection {
    fn default() -> Self {
        Self {
            max_vocab: default_max_vocab(),
            min_freq: default_min_freq(),
            max_len: default_max_len(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_d_model")]
    pub d_model: usize,
    #[serde(default = "default_n_heads")]
    pub n_heads: usize,
    #[serde(default = "default_n_layers")]
    pub n_layers: usize,
    #[serde(default = "default_d_ff")]
    pub d_ff: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
}

fn default_d_model() -> usize {
    64
}

fn default_n_heads() -> usize {
    4
}

fn default_n_layers() -> usize {
    2
}

fn default_d_ff() -> usize {
    128
}

fn default_dropout() -> f64 {
    0.1
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            d_model: default_d_model(),
            n_heads: default_n_heads(),
            n_layers: default_n_layers(),
            d_ff: default_d_ff(),
            dropout: default_dropout(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    #[serde(default = "default_patience")]
    pub early_stop_patience: usize,
    pub gradient_clip_norm: Option<f64>,
}

fn default_epochs() -> usize {
    30
}

fn default_batch_size() -> usize {
    16
}

fn default_learning_rate() -> f64 {
    2e-4
}

fn default_optimizer() -> String {
    "adam".into()
}

fn default_patience() -> usize {
    5
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            optimizer: default_optimizer(),
            early_stop_patience: default_patience(),
            gradient_clip_norm: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    #[serde(default = "default_top_occupations")]
    pub top_occupations: usize,
    #[serde(default = "default_top_industries")]
    pub top_industries: usize,
    #[serde(default = "default_term_top_k")]
    pub term_weight_top_k: usize,
    /// Which split `eval` scores: "eval" or "test".
    #[serde(default = "default_eval_split")]
    pub eval_split: String,
}

fn default_top_occupations() -> usize {
    10
}

fn default_top_industries() -> usize {
    5
}

fn default_term_top_k() -> usize {
    100
}

fn default_eval_split() -> String {
    "test".into()
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            top_occupations: default_top_occupations(),
            top_industries: default_top_industries(),
            term_weight_top_k: default_term_top_k(),
            eval_split: default_eval_split(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// "train_fraction" or "augmentation".
    pub kind: String,
    pub fractions: Option<Vec<f64>>,
    /// Policy names: "original", "balanced", or a multiplier like "2.5".
    pub policies: Option<Vec<String>>,
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let body = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let config: PipelineConfig =
        toml::from_str(&body).map_err(|e| ConfigError::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, path) in [
            ("paths.tasks", &self.paths.tasks),
            ("paths.votes", &self.paths.votes),
            ("paths.occupations", &self.paths.occupations),
            ("paths.industries", &self.paths.industries),
        ] {
            if !path.exists() {
                return Err(invalid(field, format!("path {} does not exist", path.display())));
            }
        }
        self.source()?;
        if !(3..=5).contains(&self.corpus.vote_threshold) {
            return Err(invalid("corpus.vote_threshold", "must be in 3..=5"));
        }
        let ratios = self.split.ratios;
        if ratios.iter().any(|r| *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid("split.ratios", "must be non-negative and sum to 1"));
        }
        self.augmentation_policy()?;
        if !(0.0..=1.0).contains(&self.augment.similarity_floor) {
            return Err(invalid("augment.similarity_floor", "must be in [0, 1]"));
        }
        if !(0.0..=2.0).contains(&self.augment.temperature) {
            return Err(invalid("augment.temperature", "must be in [0, 2]"));
        }
        if self.augment.max_rounds == 0 {
            return Err(invalid("augment.max_rounds", "must be >= 1"));
        }
        match self.provider.kind.as_str() {
            "mock" | "http" => {}
            other => return Err(invalid("provider.kind", format!("unknown provider `{other}`"))),
        }
        if self.tokenizer.max_vocab < 8 {
            return Err(invalid("tokenizer.max_vocab", "must be >= 8"));
        }
        if self.tokenizer.min_freq == 0 {
            return Err(invalid("tokenizer.min_freq", "must be >= 1"));
        }
        if self.tokenizer.max_len < 3 {
            return Err(invalid("tokenizer.max_len", "must be >= 3"));
        }
        // Model shape checks, with a placeholder vocabulary size.
        self.model_config(8)
            .validate()
            .map_err(|e| invalid("model", e.to_string()))?;
        self.train_config()?
            .validate()
            .map_err(|e| invalid("train", e.to_string()))?;
        match self.report.eval_split.as_str() {
            "eval" | "test" => {}
            other => {
                return Err(invalid(
                    "report.eval_split",
                    format!("must be `eval` or `test`, got `{other}`"),
                ))
            }
        }
        if let Some(sweep) = &self.sweep {
            match sweep.kind.as_str() {
                "train_fraction" => {
                    if sweep.fractions.as_ref().is_none_or(Vec::is_empty) {
                        return Err(invalid("sweep.fractions", "required for train_fraction"));
                    }
                }
                "augmentation" => {
                    if sweep.policies.as_ref().is_none_or(Vec::is_empty) {
                        return Err(invalid("sweep.policies", "required for augmentation"));
                    }
                }
                other => return Err(invalid("sweep.kind", format!("unknown sweep `{other}`"))),
            }
        }
        Ok(())
    }

    pub fn source(&self) -> Result<Source, ConfigError> {
        Source::parse(&self.corpus.source).ok_or_else(|| {
            invalid(
                "corpus.source",
                format!(
                    "unknown source `{}` (expected onet, esco, aulmi, synthetic)",
                    self.corpus.source
                ),
            )
        })
    }

    pub fn augmentation_policy(&self) -> Result<AugmentationPolicy, ConfigError> {
        match self.augment.mode.as_str() {
            "original" => Ok(AugmentationPolicy::Original),
            "balanced" => Ok(AugmentationPolicy::Balanced),
            "multiplier" => {
                let m = self
                    .augment
                    .multiplier
                    .ok_or_else(|| invalid("augment.multiplier", "required when mode=multiplier"))?;
                AugmentationPolicy::multiplier(m)
                    .map_err(|e| invalid("augment.multiplier", e.to_string()))
            }
            "targets" => {
                let t = self
                    .augment
                    .targets
                    .as_ref()
                    .ok_or_else(|| invalid("augment.targets", "required when mode=targets"))?;
                Ok(AugmentationPolicy::PerClassTargets(ClassCounts::new(
                    t.substitution,
                    t.complementarity,
                    t.negligibility,
                )))
            }
            other => Err(invalid("augment.mode", format!("unknown mode `{other}`"))),
        }
    }

    pub fn augment_options(&self) -> AugmentOptions {
        AugmentOptions {
            similarity_floor: self.augment.similarity_floor,
            temperature: self.augment.temperature,
            max_rounds: self.augment.max_rounds,
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            max_len: self.tokenizer.max_len,
            d_model: self.model.d_model,
            n_heads: self.model.n_heads,
            n_layers: self.model.n_layers,
            d_ff: self.model.d_ff,
            dropout_rate: self.model.dropout,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        let optimizer = match self.train.optimizer.as_str() {
            "adam" => OptimizerKind::Adam,
            "sgd" => OptimizerKind::Sgd,
            other => {
                return Err(invalid(
                    "train.optimizer",
                    format!("unknown optimizer `{other}`"),
                ))
            }
        };
        Ok(TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            optimizer,
            seed: self.seed,
            early_stop_patience: self.train.early_stop_patience,
            gradient_clip_norm: self.train.gradient_clip_norm,
            ..TrainConfig::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn fixture_files(dir: &tempfile::TempDir) -> String {
        for name in ["tasks.csv", "votes.csv", "occupations.csv", "industries.csv"] {
            let mut f = std::fs::File::create(dir.path().join(name)).unwrap();
            writeln!(f, "placeholder").unwrap();
        }
        let d = dir.path().display();
        format!(
            "[paths]\ntasks = \"{d}/tasks.csv\"\nvotes = \"{d}/votes.csv\"\n\
             occupations = \"{d}/occupations.csv\"\nindustries = \"{d}/industries.csv\"\n\
             output_dir = \"{d}/out\"\n"
        )
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let body = fixture_files(&dir);
        let path = dir.path().join("config.toml");
        std::fs::write(&path, body).unwrap();
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.split.ratios, [0.8, 0.1, 0.1]);
        assert_eq!(cfg.corpus.vote_threshold, 4);
        assert_eq!(cfg.provider.kind, "mock");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{}\n[model]\nd_model = 32\nweird_knob = 5\n", fixture_files(&dir));
        let path = dir.path().join("config.toml");
        std::fs::write(&path, body).unwrap();
        match load_config(&path) {
            Err(ConfigError::Parse(msg)) => assert!(msg.contains("weird_knob"), "{msg}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_ratio_sum_is_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{}\n[split]\nratios = [0.8, 0.1, 0.2]\n", fixture_files(&dir));
        let path = dir.path().join("config.toml");
        std::fs::write(&path, body).unwrap();
        match load_config(&path) {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "split.ratios"),
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn multiplier_mode_requires_multiplier() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{}\n[augment]\nmode = \"multiplier\"\n", fixture_files(&dir));
        let path = dir.path().join("config.toml");
        std::fs::write(&path, body).unwrap();
        assert!(matches!(
            load_config(&path),
            Err(ConfigError::Invalid { field, .. }) if field == "augment.multiplier"
        ));
    }

    #[test]
    fn missing_input_path_is_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().display();
        let body = format!(
            "[paths]\ntasks = \"{d}/absent.csv\"\nvotes = \"{d}/votes.csv\"\n\
             occupations = \"{d}/occ.csv\"\nindustries = \"{d}/ind.csv\"\noutput_dir = \"{d}/out\"\n"
        );
        let path = dir.path().join("config.toml");
        std::fs::write(&path, body).unwrap();
        assert!(matches!(
            load_config(&path),
            Err(ConfigError::Invalid { field, .. }) if field == "paths.tasks"
        ));
    }
}
