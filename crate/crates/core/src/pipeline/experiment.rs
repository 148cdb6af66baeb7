//! Train on a split, pick the detector threshold on validation, and score
//! every classifier and recommender on test.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::engine::{build_retrieval, IndexMeta, Models, RecommenderSettings};
use super::metrics::{evaluate, evaluate_indices, EvalReport};
use super::PipelineError;
use crate::classify::{BinaryDetector, ClassifierKind, StrategyClassifier, TrainConfig, BINARY_CLASSES};
use crate::corpus::{dedupe, filter_rare_labels, split, DatasetSplit, DialogueRecord, LabelCodec, SplitRatios, StrategyLabel};
use crate::recommend::{LpdMode, Method, Scorer, VoteWeights};
use crate::retrieve::{BesConfig, Bm25Index};
use crate::scalar::Scalar;
use crate::textprep::NormalizerConfig;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub ratios: SplitRatios,
    /// Strategies with fewer training examples than this are dropped.
    pub min_label_count: usize,
    pub detector_kind: ClassifierKind,
    /// The first kind is the one kept in [`Trained`].
    pub classifier_kinds: Vec<ClassifierKind>,
    /// Method names, validated before anything is trained.
    pub methods: Vec<String>,
    pub bes: BesConfig,
    pub weights: VoteWeights,
    pub lpd_mode: LpdMode,
    pub train: TrainConfig,
    pub normalizer: NormalizerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            ratios: SplitRatios::default(),
            min_label_count: 20,
            detector_kind: ClassifierKind::SoftmaxLr,
            classifier_kinds: vec![
                ClassifierKind::SoftmaxLr,
                ClassifierKind::NaiveBayes,
                ClassifierKind::SvmOvr,
                ClassifierKind::HybridTraditional,
            ],
            methods: Method::ALL.iter().map(|m| m.as_str().to_string()).collect(),
            bes: BesConfig::default(),
            weights: VoteWeights::default(),
            lpd_mode: LpdMode::Argmax,
            train: TrainConfig::default(),
            normalizer: NormalizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub kind: ClassifierKind,
    pub threshold: f64,
    pub validation_f1: f64,
    /// F1 of the `strategy` class on test.
    pub test_f1: f64,
    pub test: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub detector: DetectorReport,
    pub classifiers: BTreeMap<String, EvalReport>,
    pub recommenders: BTreeMap<String, EvalReport>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width summary table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed {}  train {}  validation {}  test {}", self.seed, self.n_train, self.n_validation, self.n_test);
        let _ = writeln!(out, "{:<28} {:>9} {:>9} {:>9} {:>9}", "model", "accuracy", "macro_p", "macro_r", "macro_f1");
        let mut row = |name: &str, r: &EvalReport| {
            let _ =
                writeln!(out, "{:<28} {:>9.4} {:>9.4} {:>9.4} {:>9.4}", name, r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1);
        };
        row(&format!("detector/{}", self.detector.kind.as_str()), &self.detector.test);
        for (k, r) in &self.classifiers {
            row(&format!("classifier/{k}"), r);
        }
        for (k, r) in &self.recommenders {
            row(&format!("recommender/{k}"), r);
        }
        let _ = writeln!(out, "detector threshold {:.2}  strategy-class F1 {:.4}", self.detector.threshold, self.detector.test_f1);
        out
    }
}

/// Everything trained along the way.
pub struct Trained<F: Scalar> {
    pub split: DatasetSplit,
    pub detector: BinaryDetector<F>,
    pub classifier: StrategyClassifier<F>,
    pub index: Bm25Index<F>,
    pub meta: IndexMeta<F>,
}

fn f1_of_positive(pred: &[usize], gold: &[usize]) -> f64 {
    let classes: Vec<String> = BINARY_CLASSES.iter().map(|s| s.to_string()).collect();
    evaluate_indices(pred, gold, &classes).map(|r| r.per_class[1].f1).unwrap_or(0.0)
}

/// Grid 0.05..=0.95 over `p(strategy)`; ties prefer the threshold closest
/// to 0.5. Returns `(threshold, f1)`; with no data, `(0.5, 0.0)`.
pub fn select_threshold(p_positive: &[f64], gold: &[usize]) -> (f64, f64) {
    if gold.is_empty() {
        return (0.5, 0.0);
    }
    let mut grid: Vec<f64> = (1..=19).map(|i| f64::from(i) * 0.05).collect();
    grid.sort_by(|a, b| (a - 0.5).abs().total_cmp(&(b - 0.5).abs()).then(a.total_cmp(b)));
    let mut best = (0.5, f64::NEG_INFINITY);
    for t in grid {
        let pred: Vec<usize> = p_positive.iter().map(|p| usize::from(*p >= t)).collect();
        let f1 = f1_of_positive(&pred, gold);
        if f1 > best.1 {
            best = (t, f1);
        }
    }
    best
}

pub fn run_experiment<F: Scalar>(
    records: &[DialogueRecord],
    config: &ExperimentConfig,
    scorer: Option<Arc<dyn Scorer<F>>>,
) -> Result<(ExperimentReport, Trained<F>), PipelineError> {
    let config_err = PipelineError::Config;
    let methods: Vec<Method> = config.methods.iter().map(|m| m.parse::<Method>()).collect::<Result<_, _>>().map_err(config_err)?;
    if methods.contains(&Method::Scorer) && scorer.is_none() {
        return Err(config_err("method scorer needs a configured scorer".into()));
    }
    if config.classifier_kinds.is_empty() {
        return Err(config_err("at least one classifier kind is required".into()));
    }
    config.weights.validate()?;
    config.bes.validate().map_err(crate::recommend::RecommendError::from)?;

    let data_err = |e: crate::corpus::CorpusError| PipelineError::Data(e.to_string());
    let records = filter_rare_labels(dedupe(records.to_vec()), config.min_label_count);
    let split = split(&records, config.ratios, config.seed).map_err(data_err)?;
    let mut train_cfg = config.train;
    train_cfg.seed = config.seed;
    train_cfg.svm.seed = config.seed;

    // Detector: fit on train, threshold on validation, score on test.
    let mut detector: BinaryDetector<F> = BinaryDetector::train(&split.train, config.detector_kind, &train_cfg, config.normalizer)?;
    let p_pos = |rs: &[DialogueRecord]| -> (Vec<f64>, Vec<usize>) {
        rs.iter()
            .filter_map(|r| r.binary_label.map(|b| (r, b)))
            .map(|(r, b)| (detector.classifier.predict(&r.tutor_response).probs.get(1).to_f64().unwrap_or(0.0), usize::from(b)))
            .unzip()
    };
    let (val_p, val_gold) = p_pos(&split.validation);
    let (threshold, validation_f1) = select_threshold(&val_p, &val_gold);
    let (test_p, test_gold) = p_pos(&split.test);
    detector.threshold = F::of(threshold);
    let test_pred: Vec<usize> = test_p.iter().map(|p| usize::from(*p >= threshold)).collect();
    let classes: Vec<String> = BINARY_CLASSES.iter().map(|s| s.to_string()).collect();
    let det_report = evaluate_indices(&test_pred, &test_gold, &classes).map_err(|e| PipelineError::Data(e.to_string()))?;
    let detector_report =
        DetectorReport { kind: config.detector_kind, threshold, validation_f1, test_f1: det_report.per_class[1].f1, test: det_report };

    // Classifiers on the labeled test responses.
    let canonical = LabelCodec::canonical();
    let test_pos: Vec<(&DialogueRecord, StrategyLabel)> = split.test.iter().filter_map(|r| r.strategy.map(|s| (r, s))).collect();
    let gold: Vec<StrategyLabel> = test_pos.iter().map(|(_, s)| *s).collect();
    let metric_err = |e: super::MetricsError| PipelineError::Data(e.to_string());
    let mut classifiers = BTreeMap::new();
    let mut primary = None;
    for kind in &config.classifier_kinds {
        let c: StrategyClassifier<F> = StrategyClassifier::train(&split.train, *kind, &train_cfg, config.normalizer)?;
        let pred: Vec<StrategyLabel> = test_pos.iter().map(|(r, _)| c.classify(&r.tutor_response).0).collect();
        classifiers.insert(kind.as_str().to_string(), evaluate(&pred, &gold, &canonical).map_err(metric_err)?);
        primary.get_or_insert(c);
    }
    let classifier = primary.expect("at least one classifier kind");

    // Recommenders on the labeled test histories.
    let (index, meta) = build_retrieval::<F>(&split.train, &config.normalizer)?;
    let settings = RecommenderSettings { scorer, bes: config.bes, weights: config.weights, lpd_mode: config.lpd_mode };
    let models = Models::new(detector.clone(), classifier.clone(), index.clone(), meta.clone(), settings);
    let mut recommenders = BTreeMap::new();
    for m in methods {
        let pred = test_pos
            .iter()
            .map(|(r, _)| models.recommender.recommend(&r.conversation_history, m).map(|rec| rec.chosen))
            .collect::<Result<Vec<_>, _>>()?;
        recommenders.insert(m.as_str().to_string(), evaluate(&pred, &gold, &canonical).map_err(metric_err)?);
    }

    let report = ExperimentReport {
        seed: config.seed,
        n_train: split.train.len(),
        n_validation: split.validation.len(),
        n_test: split.test.len(),
        detector: detector_report,
        classifiers,
        recommenders,
    };
    Ok((report, Trained { split, detector, classifier, index, meta }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{synth_corpus, SynthSpec};
    use crate::recommend::MockScorer;

    #[test]
    fn threshold_prefers_half_on_ties() {
        let (t, f1) = select_threshold(&[0.9, 0.1], &[1, 0]);
        assert_eq!((t, f1), (0.5, 1.0));
        let (t, _) = select_threshold(&[0.3, 0.2, 0.1], &[1, 1, 0]);
        assert!(t > 0.1 && t <= 0.2 + 1e-12);
    }

    #[test]
    fn unknown_method_fails_before_training() {
        let cfg = ExperimentConfig { methods: vec!["bert".into()], ..Default::default() };
        let err = run_experiment::<f64>(&[], &cfg, None).err().unwrap();
        assert!(err.to_string().contains("bert"));
    }

    #[test]
    fn small_run_is_deterministic() {
        let records = synth_corpus(&SynthSpec::uniform(30, 120, 3));
        let cfg = ExperimentConfig { classifier_kinds: vec![ClassifierKind::NaiveBayes], ..Default::default() };
        let scorer: Arc<dyn Scorer<f64>> = Arc::new(MockScorer::default());
        let (a, _) = run_experiment::<f64>(&records, &cfg, Some(scorer.clone())).unwrap();
        let (b, _) = run_experiment::<f64>(&records, &cfg, Some(scorer)).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.recommenders.len(), 5);
        assert!(a.render_table().contains("recommender/hybrid_prob"));
    }
}
