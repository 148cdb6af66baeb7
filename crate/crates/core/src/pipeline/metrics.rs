use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{LabelCodec, StrategyLabel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{0} predictions but {1} gold labels")]
    LengthMismatch(usize, usize),
    #[error("nothing to evaluate")]
    Empty,
    #[error("label index {0} outside the class list")]
    UnknownLabel(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Recall, reported under its per-class accuracy name.
    pub accuracy: f64,
    pub support: usize,
    /// Whether the class appears in gold or predictions (and so in the macro average).
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: usize,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub fn class(&self, label: &str) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.label == label)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Metrics over class indices. Zero denominators give 0; the macro averages
/// run over classes present in gold or predictions.
pub fn evaluate_indices(predictions: &[usize], gold: &[usize], classes: &[String]) -> Result<EvalReport, MetricsError> {
    if predictions.len() != gold.len() {
        return Err(MetricsError::LengthMismatch(predictions.len(), gold.len()));
    }
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let k = classes.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &g) in predictions.iter().zip(gold) {
        if p >= k {
            return Err(MetricsError::UnknownLabel(p));
        }
        if g >= k {
            return Err(MetricsError::UnknownLabel(g));
        }
        confusion[g][p] += 1;
    }
    let mut per_class = Vec::with_capacity(k);
    for (c, label) in classes.iter().enumerate() {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        per_class.push(ClassMetrics {
            label: label.clone(),
            precision,
            recall,
            f1,
            accuracy: recall,
            support,
            present: support > 0 || predicted > 0,
        });
    }
    let present: Vec<&ClassMetrics> = per_class.iter().filter(|c| c.present).collect();
    let mean = |f: fn(&ClassMetrics) -> f64| present.iter().map(|c| f(c)).sum::<f64>() / present.len() as f64;
    let trace: usize = (0..k).map(|c| confusion[c][c]).sum();
    Ok(EvalReport {
        n_samples: gold.len(),
        accuracy: ratio(trace, gold.len()),
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        per_class,
        confusion,
    })
}

pub fn evaluate(predictions: &[StrategyLabel], gold: &[StrategyLabel], codec: &LabelCodec) -> Result<EvalReport, MetricsError> {
    if predictions.len() != gold.len() {
        return Err(MetricsError::LengthMismatch(predictions.len(), gold.len()));
    }
    let enc = |ls: &[StrategyLabel]| -> Result<Vec<usize>, MetricsError> {
        ls.iter().map(|l| codec.encode(*l).ok_or(MetricsError::UnknownLabel(usize::MAX))).collect()
    };
    evaluate_indices(&enc(predictions)?, &enc(gold)?, &codec.names())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn hand_computed_binary_confusion() {
        // TP 8, FP 2, FN 1, TN 9 for class 1.
        let mut pred = Vec::new();
        let mut gold = Vec::new();
        for (p, g, n) in [(1, 1, 8), (1, 0, 2), (0, 1, 1), (0, 0, 9)] {
            for _ in 0..n {
                pred.push(p);
                gold.push(g);
            }
        }
        let r = evaluate_indices(&pred, &gold, &names(2)).unwrap();
        let pos = &r.per_class[1];
        assert!((pos.precision - 0.8).abs() < 1e-12);
        assert!((pos.recall - 8.0 / 9.0).abs() < 1e-12);
        assert!((pos.f1 - 16.0 / 19.0).abs() < 1e-12);
        assert_eq!(r.confusion, vec![vec![9, 2], vec![1, 8]]);
        assert!((r.accuracy - 17.0 / 20.0).abs() < 1e-12);
    }

    #[test]
    fn identity_and_absent_classes() {
        let r = evaluate_indices(&[0, 1, 1], &[0, 1, 1], &names(3)).unwrap();
        assert_eq!((r.accuracy, r.macro_f1), (1.0, 1.0));
        assert!(!r.per_class[2].present);
        assert_eq!(r.per_class[2].f1, 0.0);
    }

    #[test]
    fn errors() {
        assert_eq!(evaluate_indices(&[0], &[0, 1], &names(2)).unwrap_err(), MetricsError::LengthMismatch(1, 2));
        assert_eq!(evaluate_indices(&[], &[], &names(2)).unwrap_err(), MetricsError::Empty);
    }

    proptest! {
        #[test]
        fn accuracy_and_confusion_consistent(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60)) {
            let (p, g): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let r = evaluate_indices(&p, &g, &names(4)).unwrap();
            let hits = p.iter().zip(&g).filter(|(a, b)| a == b).count() as f64 / p.len() as f64;
            prop_assert!((r.accuracy - hits).abs() < 1e-12);
            for c in 0..4 {
                prop_assert_eq!(r.confusion[c].iter().sum::<usize>(), g.iter().filter(|x| **x == c).count());
            }
        }

        #[test]
        fn macro_f1_ignores_sample_order(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60)) {
            let (p, g): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let (pr, gr): (Vec<usize>, Vec<usize>) = pairs.iter().rev().copied().unzip();
            let a = evaluate_indices(&p, &g, &names(4)).unwrap();
            let b = evaluate_indices(&pr, &gr, &names(4)).unwrap();
            prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        }
    }
}
