//! Probability vectors over a label set. Every recommender, classifier and
//! voter exchanges values of this type.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbError {
    #[error("probability vector is empty")]
    Empty,
    #[error("entry {index} is negative or not finite")]
    BadEntry { index: usize },
    #[error("entries sum to {sum}, not 1")]
    BadSum { sum: f64 },
    #[error("length {got} does not match label count {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Normalized probability vector over `K` labels in codec order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<F>", into = "Vec<F>", bound = "F: Scalar")]
pub struct ProbDist<F> {
    probs: Vec<F>,
}

impl<F: Scalar> ProbDist<F> {
    /// Validates non-negativity and `|sum - 1| <= tol` without renormalizing.
    pub fn new(probs: Vec<F>) -> Result<Self, ProbError> {
        Self::validate(&probs)?;
        Ok(Self { probs })
    }

    fn validate(probs: &[F]) -> Result<(), ProbError> {
        if probs.is_empty() {
            return Err(ProbError::Empty);
        }
        if let Some(index) = probs.iter().position(|p| !p.is_finite() || *p < F::zero()) {
            return Err(ProbError::BadEntry { index });
        }
        let sum: F = probs.iter().copied().sum();
        if (sum - F::one()).abs() > F::simplex_tol() {
            return Err(ProbError::BadSum { sum: sum.to_f64().unwrap_or(f64::NAN) });
        }
        Ok(())
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0, "uniform distribution over zero labels");
        Self { probs: vec![F::one() / F::of_usize(k); k] }
    }

    /// All mass on one label.
    pub fn one_hot(k: usize, index: usize) -> Self {
        let mut probs = vec![F::zero(); k];
        probs[index] = F::one();
        Self { probs }
    }

    /// Divides non-negative weights by their sum. All-zero input yields `None`.
    pub fn from_weights(weights: &[F]) -> Option<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < F::zero()) {
            return None;
        }
        let total: F = weights.iter().copied().sum();
        if total <= F::zero() {
            return None;
        }
        Some(Self { probs: weights.iter().map(|w| *w / total).collect() })
    }

    /// Softmax with max-subtraction.
    pub fn softmax(scores: &[F]) -> Self {
        assert!(!scores.is_empty(), "softmax of zero scores");
        let max = scores.iter().copied().fold(F::neg_infinity(), F::max);
        let exps: Vec<F> = scores.iter().map(|s| (*s - max).exp()).collect();
        let total: F = exps.iter().copied().sum();
        Self { probs: exps.into_iter().map(|e| e / total).collect() }
    }

    /// Accepts a remote payload: renormalizes when the sum is within `slack`
    /// of one, rejects otherwise.
    pub fn renormalized(probs: Vec<F>, slack: F) -> Result<Self, ProbError> {
        if probs.is_empty() {
            return Err(ProbError::Empty);
        }
        if let Some(index) = probs.iter().position(|p| !p.is_finite() || *p < F::zero()) {
            return Err(ProbError::BadEntry { index });
        }
        let sum: F = probs.iter().copied().sum();
        if (sum - F::one()).abs() > slack {
            return Err(ProbError::BadSum { sum: sum.to_f64().unwrap_or(f64::NAN) });
        }
        Ok(Self { probs: probs.into_iter().map(|p| p / sum).collect() })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[F] {
        &self.probs
    }

    pub fn get(&self, index: usize) -> F {
        self.probs[index]
    }

    pub fn sum(&self) -> F {
        self.probs.iter().copied().sum()
    }

    /// Index of the largest entry; ties go to the lower index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    /// `(index, prob)` pairs sorted by probability descending, ties by index.
    pub fn ranked(&self) -> Vec<(usize, F)> {
        rank_scores(&self.probs)
    }
}

impl<F: Scalar> TryFrom<Vec<F>> for ProbDist<F> {
    type Error = ProbError;

    fn try_from(probs: Vec<F>) -> Result<Self, Self::Error> {
        Self::new(probs)
    }
}

impl<F> From<ProbDist<F>> for Vec<F> {
    fn from(d: ProbDist<F>) -> Self {
        d.probs
    }
}

/// Lowest index among the maxima.
pub fn argmax<F: Scalar>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Sorts `(index, score)` descending by score with ascending index tie-break.
pub fn rank_scores<F: Scalar>(scores: &[F]) -> Vec<(usize, F)> {
    let mut ranked: Vec<(usize, F)> = scores.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    ranked
}
