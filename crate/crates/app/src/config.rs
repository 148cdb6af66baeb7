//! TOML configuration with environment overrides.
//!
//! Every key is optional. `COPILOT_SCORER_URL` and `COPILOT_GENERATOR_URL`
//! override the file. Without a scorer URL the in-process keyword mock is
//! used; without a generator URL, the template stub.

use std::path::{Path, PathBuf};

use copilot_core::classify::ClassifierKind;
use copilot_core::corpus::SplitRatios;
use copilot_core::pipeline::ExperimentConfig;
use copilot_core::recommend::{LpdMode, Method, VoteWeights};
use copilot_core::retrieve::BesConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_SCORER_URL: &str = "COPILOT_SCORER_URL";
pub const ENV_GENERATOR_URL: &str = "COPILOT_GENERATOR_URL";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let r = SplitRatios::default();
        Self { train: r.train, validation: r.validation, test: r.test }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub listen: String,
    /// Holds `detector/`, `classifier/` and `index/`.
    pub bundle_dir: PathBuf,
    /// Session logs live under `data_dir/sessions`.
    pub data_dir: PathBuf,
    /// Labeled dialogues (JSONL or CSV) for training and evaluation.
    pub corpus: Option<PathBuf>,
    pub report_path: PathBuf,
    pub scorer_url: Option<String>,
    pub scorer_timeout_ms: u64,
    pub scorer_codec_fingerprint: Option<String>,
    pub generator_url: Option<String>,
    pub generator_timeout_ms: u64,
    pub default_method: Method,
    pub lpd_sample_seed: Option<u64>,
    pub bes: BesConfig,
    pub weights: VoteWeights,
    /// Overrides the threshold stored in the detector bundle.
    pub detector_threshold: Option<f64>,
    pub detector_kind: ClassifierKind,
    pub classifier_kind: ClassifierKind,
    pub split: SplitConfig,
    pub min_label_count: usize,
    pub seed: u64,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            bundle_dir: "models".into(),
            data_dir: "data".into(),
            corpus: None,
            report_path: "report.json".into(),
            scorer_url: None,
            scorer_timeout_ms: 2000,
            scorer_codec_fingerprint: None,
            generator_url: None,
            generator_timeout_ms: 5000,
            default_method: Method::HybridProb,
            lpd_sample_seed: None,
            bes: BesConfig::default(),
            weights: VoteWeights::default(),
            detector_threshold: None,
            detector_kind: ClassifierKind::SoftmaxLr,
            classifier_kind: ClassifierKind::SoftmaxLr,
            split: SplitConfig::default(),
            min_label_count: 20,
            seed: 42,
        }
    }
}

impl AppConfig {
    /// Reads `path` (or starts from defaults), applies environment
    /// overrides, and validates.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.display().to_string(), source })?;
                Self::from_toml(&text).map_err(|source| ConfigError::Parse { path: p.display().to_string(), source })?
            }
            None => Self::default(),
        };
        config.apply_env(|k| std::env::var(k).ok());
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(url) = get(ENV_SCORER_URL).filter(|s| !s.is_empty()) {
            self.scorer_url = Some(url);
        }
        if let Some(url) = get(ENV_GENERATOR_URL).filter(|s| !s.is_empty()) {
            self.generator_url = Some(url);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        self.weights.validate().map_err(|e| invalid(e.to_string()))?;
        self.bes.validate().map_err(|e| invalid(e.to_string()))?;
        self.ratios().validate().map_err(|e| invalid(e.to_string()))?;
        if let Some(t) = self.detector_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(invalid(format!("detector_threshold {t} outside [0, 1]")));
            }
        }
        if self.scorer_timeout_ms == 0 || self.generator_timeout_ms == 0 {
            return Err(invalid("timeouts must be positive".into()));
        }
        Ok(())
    }

    pub fn ratios(&self) -> SplitRatios {
        SplitRatios::new(self.split.train, self.split.validation, self.split.test)
    }

    pub fn lpd_mode(&self) -> LpdMode {
        match self.lpd_sample_seed {
            Some(seed) => LpdMode::Sample { seed },
            None => LpdMode::Argmax,
        }
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.data_dir.join("sessions")
    }

    pub fn experiment(&self) -> ExperimentConfig {
        let mut kinds = vec![self.classifier_kind];
        kinds.extend(ClassifierKind::ALL.into_iter().filter(|k| *k != self.classifier_kind));
        ExperimentConfig {
            seed: self.seed,
            ratios: self.ratios(),
            min_label_count: self.min_label_count,
            detector_kind: self.detector_kind,
            classifier_kinds: kinds,
            bes: self.bes,
            weights: self.weights,
            lpd_mode: self.lpd_mode(),
            ..ExperimentConfig::default()
        }
    }

    /// Copy safe to show to clients: credentials in URLs are masked.
    pub fn redacted(&self) -> Self {
        let mut c = self.clone();
        c.scorer_url = c.scorer_url.as_deref().map(redact_url);
        c.generator_url = c.generator_url.as_deref().map(redact_url);
        c
    }
}

fn redact_url(url: &str) -> String {
    match (url.find("://"), url.find('@')) {
        (Some(s), Some(at)) if at > s => format!("{}***{}", &url[..s + 3], &url[at..]),
        _ => url.to_string(),
    }
}
