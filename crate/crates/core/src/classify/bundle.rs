//! Model bundles on disk: a directory holding `tfidf.json`,
//! `classifier.json`, `codec.json` and `meta.json`.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BinaryDetector, ClassifierKind, ClassifierModel, StrategyClassifier, TextClassifier, BINARY_CLASSES};
use crate::corpus::{LabelCodec, StrategyLabel};
use crate::features::TextVectorizer;
use crate::scalar::Scalar;
use crate::textprep;

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("stopword list hash mismatch: bundle has {found}, engine ships {expected}")]
    StopwordMismatch { expected: String, found: String },
    #[error("inconsistent bundle: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub format_version: u32,
    pub role: String,
    pub kind: ClassifierKind,
    pub seed: u64,
    pub normalizer_hash: String,
    pub stopword_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct CodecFile {
    classes: Vec<String>,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), BundleError> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value).map_err(|source| BundleError::Json { path: path.display().to_string(), source })?;
    fs::write(&path, text).map_err(|source| BundleError::Io { path: path.display().to_string(), source })
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, BundleError> {
    let text = fs::read_to_string(path).map_err(|source| BundleError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|source| BundleError::Json { path: path.display().to_string(), source })
}

fn save_text_classifier<F: Scalar>(
    dir: &Path,
    classifier: &TextClassifier<F>,
    role: &str,
    seed: u64,
    threshold: Option<f64>,
) -> Result<(), BundleError> {
    fs::create_dir_all(dir).map_err(|source| BundleError::Io { path: dir.display().to_string(), source })?;
    write_json(dir, "tfidf.json", &classifier.vectorizer)?;
    write_json(dir, "classifier.json", &classifier.model)?;
    write_json(dir, "codec.json", &CodecFile { classes: classifier.classes.clone() })?;
    let meta = BundleMeta {
        format_version: BUNDLE_FORMAT_VERSION,
        role: role.to_string(),
        kind: classifier.model.kind(),
        seed,
        normalizer_hash: classifier.vectorizer.normalizer_config.fingerprint(),
        stopword_hash: classifier.vectorizer.stopword_hash.clone(),
        threshold,
    };
    write_json(dir, "meta.json", &meta)
}

fn load_text_classifier<F: Scalar>(dir: &Path, role: &str) -> Result<(TextClassifier<F>, BundleMeta), BundleError> {
    let meta: BundleMeta = read_json(&dir.join("meta.json"))?;
    if meta.role != role {
        return Err(BundleError::Inconsistent(format!("expected a {role} bundle, found {}", meta.role)));
    }
    let vectorizer: TextVectorizer<F> = read_json(&dir.join("tfidf.json"))?;
    let expected = textprep::stopword_hash();
    for found in [&vectorizer.stopword_hash, &meta.stopword_hash] {
        if found != expected {
            return Err(BundleError::StopwordMismatch { expected: expected.to_string(), found: found.clone() });
        }
    }
    if vectorizer.normalizer_config.fingerprint() != meta.normalizer_hash {
        return Err(BundleError::Inconsistent("normalizer hash does not match tfidf.json".into()));
    }
    let model: ClassifierModel<F> = read_json(&dir.join("classifier.json"))?;
    let codec: CodecFile = read_json(&dir.join("codec.json"))?;
    Ok((TextClassifier { vectorizer, model, classes: codec.classes }, meta))
}

impl<F: Scalar> BinaryDetector<F> {
    pub fn save(&self, dir: &Path, seed: u64) -> Result<(), BundleError> {
        let threshold = self.threshold.to_f64().expect("finite threshold");
        save_text_classifier(dir, &self.classifier, "detector", seed, Some(threshold))
    }

    pub fn load(dir: &Path) -> Result<(Self, BundleMeta), BundleError> {
        let (classifier, meta) = load_text_classifier::<F>(dir, "detector")?;
        if classifier.classes != BINARY_CLASSES {
            return Err(BundleError::Inconsistent("detector codec must be [no_strategy, strategy]".into()));
        }
        let threshold = F::of(meta.threshold.unwrap_or(0.5));
        Ok((Self { classifier, threshold }, meta))
    }
}

impl<F: Scalar> StrategyClassifier<F> {
    pub fn save(&self, dir: &Path, seed: u64) -> Result<(), BundleError> {
        save_text_classifier(dir, &self.classifier, "classifier", seed, None)
    }

    pub fn load(dir: &Path) -> Result<(Self, BundleMeta), BundleError> {
        let (classifier, meta) = load_text_classifier::<F>(dir, "classifier")?;
        let labels = classifier
            .classes
            .iter()
            .map(|c| c.parse::<StrategyLabel>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| BundleError::Inconsistent(e.to_string()))?;
        let codec = LabelCodec::new(labels).map_err(BundleError::Inconsistent)?;
        Ok((Self { classifier, codec }, meta))
    }
}
