//! Classical text classifiers over TF-IDF features, the majority-vote
//! ensemble, the binary detector and strategy classifier facades, and
//! occlusion attribution.

pub mod bundle;
mod linear;
mod nb;
mod vote;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, DialogueRecord, LabelCodec, StrategyLabel};
use crate::features::{smote, FeatureError, SmoteError, SparseVector, TextVectorizer, TfIdfModel};
use crate::prob::ProbDist;
use crate::scalar::Scalar;
use crate::textprep::NormalizerConfig;

pub use bundle::{BundleError, BundleMeta, BUNDLE_FORMAT_VERSION};
pub use linear::{
    softmax_objective, train_softmax, train_svm_ovr, LinearKind, LinearModel, Objective, SoftmaxConfig, SoftmaxFit, SvmConfig,
};
pub use nb::{predict_nb, train_nb, NaiveBayesModel};
pub use vote::majority_vote;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("feature matrix has {0} rows but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("label index {0} is outside the class range")]
    LabelOutOfRange(usize),
    #[error("class {0} has no training samples")]
    EmptyClass(usize),
    #[error("need at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("loss became non-finite at epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize },
    #[error("model is not trained")]
    ModelNotTrained,
    #[error("unknown classifier kind {0:?}")]
    UnknownKind(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Smote(#[from] SmoteError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    NaiveBayes,
    SoftmaxLr,
    SvmOvr,
    /// Majority vote of SVM, Naive Bayes and softmax LR, in that precedence.
    HybridTraditional,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] =
        [ClassifierKind::NaiveBayes, ClassifierKind::SoftmaxLr, ClassifierKind::SvmOvr, ClassifierKind::HybridTraditional];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::NaiveBayes => "naive_bayes",
            ClassifierKind::SoftmaxLr => "softmax_lr",
            ClassifierKind::SvmOvr => "svm_ovr",
            ClassifierKind::HybridTraditional => "hybrid_traditional",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| ClassifyError::UnknownKind(s.to_string()))
    }
}

/// Member order of the hybrid-traditional ensemble; also its tie precedence.
pub const HYBRID_TRADITIONAL_MEMBERS: [ClassifierKind; 3] = [ClassifierKind::SvmOvr, ClassifierKind::NaiveBayes, ClassifierKind::SoftmaxLr];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub softmax: SoftmaxConfig,
    pub svm: SvmConfig,
    /// Oversample every class to the largest class size with SMOTE using
    /// this many neighbours.
    pub smote_k: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { softmax: SoftmaxConfig::default(), svm: SvmConfig::default(), smote_k: None, seed: 42 }
    }
}

/// A trained model over TF-IDF (linear) or count (Naive Bayes) features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", bound = "F: Scalar")]
pub enum ClassifierModel<F> {
    NaiveBayes(NaiveBayesModel<F>),
    Linear(LinearModel<F>),
    Voting(VotingEnsemble<F>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct VotingEnsemble<F> {
    /// Members in tie-break precedence order.
    pub members: Vec<(ClassifierKind, ClassifierModel<F>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<F> {
    pub label: usize,
    pub probs: ProbDist<F>,
}

impl<F: Scalar> ClassifierModel<F> {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierModel::NaiveBayes(_) => ClassifierKind::NaiveBayes,
            ClassifierModel::Linear(m) => match m.kind {
                LinearKind::SoftmaxLr => ClassifierKind::SoftmaxLr,
                LinearKind::SvmOvr => ClassifierKind::SvmOvr,
            },
            ClassifierModel::Voting(_) => ClassifierKind::HybridTraditional,
        }
    }

    /// Base models predict the argmax of their distribution; the ensemble
    /// predicts the majority vote and reports the mean member distribution.
    pub fn predict_tokens(&self, tfidf: &TfIdfModel<F>, tokens: &[String]) -> Prediction<F> {
        match self {
            ClassifierModel::NaiveBayes(m) => {
                let probs = m.predict(&tfidf.counts(tokens));
                Prediction { label: probs.argmax(), probs }
            }
            ClassifierModel::Linear(m) => {
                let probs = m.predict(&tfidf.transform(tokens));
                Prediction { label: probs.argmax(), probs }
            }
            ClassifierModel::Voting(e) => {
                let preds: Vec<(ClassifierKind, Prediction<F>)> =
                    e.members.iter().map(|(k, m)| (*k, m.predict_tokens(tfidf, tokens))).collect();
                let votes: Vec<(ClassifierKind, usize)> = preds.iter().map(|(k, p)| (*k, p.label)).collect();
                let precedence: Vec<ClassifierKind> = e.members.iter().map(|(k, _)| *k).collect();
                let label = majority_vote(&votes, &precedence).expect("ensemble has members");
                let k = preds[0].1.probs.len();
                let n = F::of_usize(preds.len());
                let mean: Vec<F> = (0..k).map(|i| preds.iter().map(|(_, p)| p.probs.get(i)).sum::<F>() / n).collect();
                let probs = ProbDist::from_weights(&mean).expect("mean of distributions is a distribution");
                Prediction { label, probs }
            }
        }
    }
}

/// Normalizer + TF-IDF vectorizer + classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct TextClassifier<F> {
    pub vectorizer: TextVectorizer<F>,
    pub model: ClassifierModel<F>,
    pub classes: Vec<String>,
}

impl<F: Scalar> TextClassifier<F> {
    pub fn train<S: AsRef<str>>(
        texts: &[S],
        y: &[usize],
        classes: Vec<String>,
        kind: ClassifierKind,
        config: &TrainConfig,
        normalizer: NormalizerConfig,
    ) -> Result<Self, ClassifyError> {
        if texts.len() != y.len() {
            return Err(ClassifyError::LengthMismatch(texts.len(), y.len()));
        }
        let vectorizer = TextVectorizer::fit(texts, normalizer)?;
        let tokens: Vec<Vec<String>> = texts.iter().map(|t| vectorizer.tokens(t.as_ref())).collect();
        let model = fit_model(&vectorizer.model, &tokens, y, classes.len(), kind, config)?;
        Ok(Self { vectorizer, model, classes })
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn predict(&self, text: &str) -> Prediction<F> {
        self.predict_tokens(&self.vectorizer.tokens(text))
    }

    pub fn predict_tokens(&self, tokens: &[String]) -> Prediction<F> {
        self.model.predict_tokens(&self.vectorizer.model, tokens)
    }
}

fn fit_model<F: Scalar>(
    tfidf: &TfIdfModel<F>,
    tokens: &[Vec<String>],
    y: &[usize],
    n_classes: usize,
    kind: ClassifierKind,
    config: &TrainConfig,
) -> Result<ClassifierModel<F>, ClassifyError> {
    let featurize = |counts: bool| -> Result<(Vec<SparseVector<F>>, Vec<usize>), ClassifyError> {
        let x: Vec<SparseVector<F>> = tokens.iter().map(|t| if counts { tfidf.counts(t) } else { tfidf.transform(t) }).collect();
        match config.smote_k {
            Some(k) => oversample(x, y, n_classes, k, config.seed),
            None => Ok((x, y.to_vec())),
        }
    };
    Ok(match kind {
        ClassifierKind::NaiveBayes => {
            let (x, y) = featurize(true)?;
            ClassifierModel::NaiveBayes(train_nb(&x, &y, n_classes)?)
        }
        ClassifierKind::SoftmaxLr => {
            let (x, y) = featurize(false)?;
            ClassifierModel::Linear(train_softmax(&x, &y, n_classes, &config.softmax)?.model)
        }
        ClassifierKind::SvmOvr => {
            let (x, y) = featurize(false)?;
            let svm = SvmConfig { seed: config.seed, ..config.svm };
            ClassifierModel::Linear(train_svm_ovr(&x, &y, n_classes, &svm)?)
        }
        ClassifierKind::HybridTraditional => {
            let members = HYBRID_TRADITIONAL_MEMBERS
                .iter()
                .map(|k| fit_model(tfidf, tokens, y, n_classes, *k, config).map(|m| (*k, m)))
                .collect::<Result<Vec<_>, _>>()?;
            ClassifierModel::Voting(VotingEnsemble { members })
        }
    })
}

/// SMOTE every class up to the size of the largest one, on densified features.
fn oversample<F: Scalar>(
    x: Vec<SparseVector<F>>,
    y: &[usize],
    n_classes: usize,
    k: usize,
    seed: u64,
) -> Result<(Vec<SparseVector<F>>, Vec<usize>), ClassifyError> {
    let dim = x.first().map_or(0, SparseVector::dim);
    let mut counts = vec![0usize; n_classes];
    for c in y {
        counts[*c] += 1;
    }
    let target = counts.iter().copied().max().unwrap_or(0);
    let mut points: Vec<(Vec<F>, usize)> = x.iter().map(SparseVector::to_dense).zip(y.iter().copied()).collect();
    for (c, n) in counts.iter().enumerate() {
        if *n < target {
            points = smote(&points, &c, target, k, seed.wrapping_add(c as u64))?;
        }
    }
    let y = points.iter().map(|(_, l)| *l).collect();
    let x = points.into_iter().map(|(v, _)| SparseVector::from_pairs(dim, v.into_iter().enumerate())).collect();
    Ok((x, y))
}

/// Binary strategy-presence detector.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDetector<F> {
    pub classifier: TextClassifier<F>,
    pub threshold: F,
}

pub const BINARY_CLASSES: [&str; 2] = ["no_strategy", "strategy"];

impl<F: Scalar> BinaryDetector<F> {
    /// Trains on the tutor responses of records that carry a binary label.
    pub fn train(
        records: &[DialogueRecord],
        kind: ClassifierKind,
        config: &TrainConfig,
        normalizer: NormalizerConfig,
    ) -> Result<Self, ClassifyError> {
        let labeled: Vec<&DialogueRecord> = records.iter().filter(|r| r.binary_label.is_some()).collect();
        let texts: Vec<&str> = labeled.iter().map(|r| r.tutor_response.as_str()).collect();
        let y: Vec<usize> = labeled.iter().map(|r| usize::from(r.binary_label.unwrap_or(0))).collect();
        let classes = BINARY_CLASSES.iter().map(|s| s.to_string()).collect();
        let classifier = TextClassifier::train(&texts, &y, classes, kind, config, normalizer)?;
        Ok(Self { classifier, threshold: F::of(0.5) })
    }

    /// Class 1 iff `p(1) >= threshold`.
    pub fn decide(&self, probs: &ProbDist<F>) -> u8 {
        u8::from(probs.get(1) >= self.threshold)
    }

    pub fn detect(&self, text: &str) -> (u8, ProbDist<F>) {
        let probs = self.classifier.predict(text).probs;
        (self.decide(&probs), probs)
    }
}

/// Fine-grained strategy classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyClassifier<F> {
    pub classifier: TextClassifier<F>,
    pub codec: LabelCodec,
}

impl<F: Scalar> StrategyClassifier<F> {
    /// Trains on the tutor responses of records with a strategy label; the
    /// codec covers the labels present, in canonical order.
    pub fn train(
        records: &[DialogueRecord],
        kind: ClassifierKind,
        config: &TrainConfig,
        normalizer: NormalizerConfig,
    ) -> Result<Self, ClassifyError> {
        let codec = LabelCodec::fit(records)?;
        let labeled: Vec<(&str, StrategyLabel)> =
            records.iter().filter_map(|r| r.strategy.map(|s| (r.tutor_response.as_str(), s))).collect();
        let texts: Vec<&str> = labeled.iter().map(|(t, _)| *t).collect();
        let y: Vec<usize> = labeled.iter().map(|(_, s)| codec.encode(*s).expect("codec fitted on these labels")).collect();
        let classifier = TextClassifier::train(&texts, &y, codec.names(), kind, config, normalizer)?;
        Ok(Self { classifier, codec })
    }

    pub fn classify(&self, text: &str) -> (StrategyLabel, ProbDist<F>) {
        let p = self.classifier.predict(text);
        (self.codec.decode(p.label).expect("prediction within codec"), p.probs)
    }
}

pub fn detect_binary<F: Scalar>(detector: Option<&BinaryDetector<F>>, tutor_response: &str) -> Result<(u8, ProbDist<F>), ClassifyError> {
    detector.map(|d| d.detect(tutor_response)).ok_or(ClassifyError::ModelNotTrained)
}

pub fn classify_strategy<F: Scalar>(
    classifier: Option<&StrategyClassifier<F>>,
    tutor_response: &str,
) -> Result<(StrategyLabel, ProbDist<F>), ClassifyError> {
    classifier.map(|c| c.classify(tutor_response)).ok_or(ClassifyError::ModelNotTrained)
}

/// Per-token `p(target | text) - p(target | text without that token)`,
/// sorted by absolute delta descending (stable in token order).
pub fn occlusion_attribution<F: Scalar>(classifier: &TextClassifier<F>, text: &str, target: usize) -> Vec<(String, F)> {
    let tokens = classifier.vectorizer.tokens(text);
    let base = classifier.predict_tokens(&tokens).probs.get(target);
    let mut out: Vec<(String, F)> = (0..tokens.len())
        .map(|i| {
            let mut rest = tokens.clone();
            let removed = rest.remove(i);
            (removed, base - classifier.predict_tokens(&rest).probs.get(target))
        })
        .collect();
    out.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap_or(std::cmp::Ordering::Equal));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{planted_stems, synth_corpus, SynthSpec};

    fn small_corpus() -> Vec<DialogueRecord> {
        synth_corpus(&SynthSpec::uniform(30, 60, 9))
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ClassifierKind::ALL {
            assert_eq!(k.as_str().parse::<ClassifierKind>().unwrap(), k);
        }
        assert!("boosting".parse::<ClassifierKind>().is_err());
    }

    #[test]
    fn detector_threshold_boundary_is_inclusive() {
        let d: BinaryDetector<f64> =
            BinaryDetector::train(&small_corpus(), ClassifierKind::NaiveBayes, &TrainConfig::default(), NormalizerConfig::default())
                .unwrap();
        let half = ProbDist::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(d.decide(&half), 1);
    }

    #[test]
    fn uniform_distribution_classifies_as_first_label() {
        let c: StrategyClassifier<f64> =
            StrategyClassifier::train(&small_corpus(), ClassifierKind::SoftmaxLr, &TrainConfig::default(), NormalizerConfig::default())
                .unwrap();
        let uniform = ProbDist::<f64>::uniform(8);
        assert_eq!(c.codec.decode(uniform.argmax()), Some(StrategyLabel::AffirmCorrectAnswer));
        let (_, p) = c.classify("");
        assert!((p.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn missing_models_report_not_trained() {
        assert!(matches!(detect_binary::<f64>(None, "x"), Err(ClassifyError::ModelNotTrained)));
        assert!(matches!(classify_strategy::<f64>(None, "x"), Err(ClassifyError::ModelNotTrained)));
    }

    #[test]
    fn every_kind_predicts_valid_distributions() {
        let records = small_corpus();
        for kind in ClassifierKind::ALL {
            let c: StrategyClassifier<f64> =
                StrategyClassifier::train(&records, kind, &TrainConfig::default(), NormalizerConfig::default()).unwrap();
            for text in ["", "!!!", "Hint: remember the fraction", "zzz qqq"] {
                let (_, p) = c.classify(text);
                assert!((p.sum() - 1.0).abs() < 1e-9, "{kind}");
                assert!(p.probs().iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn smote_balanced_training_runs() {
        let records = synth_corpus(&SynthSpec::uniform(10, 200, 4));
        let cfg = TrainConfig { smote_k: Some(5), ..Default::default() };
        let d: BinaryDetector<f64> = BinaryDetector::train(&records, ClassifierKind::SoftmaxLr, &cfg, NormalizerConfig::default()).unwrap();
        let (label, _) = d.detect("Hint: remember to consider the fraction.");
        assert_eq!(label, 1);
    }

    #[test]
    fn attribution_of_oov_and_empty_text() {
        let records = small_corpus();
        let c: StrategyClassifier<f64> =
            StrategyClassifier::train(&records, ClassifierKind::NaiveBayes, &TrainConfig::default(), NormalizerConfig::default()).unwrap();
        assert!(occlusion_attribution(&c.classifier, "", 0).is_empty());
        let attr = occlusion_attribution(&c.classifier, "hint xylophone", 5);
        let oov = attr.iter().find(|(t, _)| t == "xylophon").unwrap();
        assert!(oov.1.abs() < 1e-12);
        let hint_idx = c.codec.encode(StrategyLabel::ProvideHint).unwrap();
        let attr = occlusion_attribution(&c.classifier, "Remember this hint about the fraction", hint_idx);
        assert!(planted_stems(StrategyLabel::ProvideHint).contains(&attr[0].0));
    }
}
