use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::features::SparseVector;
use crate::prob::ProbDist;
use crate::scalar::Scalar;

/// Multinomial Naive Bayes with Laplace smoothing (alpha = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct NaiveBayesModel<F> {
    pub class_log_priors: Vec<F>,
    /// `K x V`: `ln((count(t, c) + 1) / (total(c) + V))`.
    pub token_log_likelihoods: Vec<Vec<F>>,
}

pub fn train_nb<F: Scalar>(x: &[SparseVector<F>], y: &[usize], n_classes: usize) -> Result<NaiveBayesModel<F>, ClassifyError> {
    if x.len() != y.len() {
        return Err(ClassifyError::LengthMismatch(x.len(), y.len()));
    }
    let vocab = x.first().map(|v| v.dim()).ok_or(ClassifyError::EmptyTrainingSet)?;
    let mut docs = vec![0usize; n_classes];
    let mut counts = vec![vec![F::zero(); vocab]; n_classes];
    for (xi, &c) in x.iter().zip(y) {
        if c >= n_classes {
            return Err(ClassifyError::LabelOutOfRange(c));
        }
        docs[c] += 1;
        for (t, w) in xi.iter() {
            counts[c][t] = counts[c][t] + w;
        }
    }
    if let Some(c) = docs.iter().position(|d| *d == 0) {
        return Err(ClassifyError::EmptyClass(c));
    }
    let n = F::of_usize(x.len());
    let v = F::of_usize(vocab);
    let class_log_priors = docs.iter().map(|d| (F::of_usize(*d) / n).ln()).collect();
    let token_log_likelihoods = counts
        .into_iter()
        .map(|row| {
            let total: F = row.iter().copied().sum();
            let denom = total + v;
            row.into_iter().map(|c| ((c + F::one()) / denom).ln()).collect()
        })
        .collect();
    Ok(NaiveBayesModel { class_log_priors, token_log_likelihoods })
}

impl<F: Scalar> NaiveBayesModel<F> {
    pub fn n_classes(&self) -> usize {
        self.class_log_priors.len()
    }

    /// Unnormalized joint log-probabilities `ln P(c) + sum_t x_t ln P(t|c)`.
    pub fn log_scores(&self, x: &SparseVector<F>) -> Vec<F> {
        self.class_log_priors
            .iter()
            .zip(&self.token_log_likelihoods)
            .map(|(prior, ll)| *prior + x.iter().map(|(t, w)| w * ll[t]).sum::<F>())
            .collect()
    }

    pub fn predict(&self, x: &SparseVector<F>) -> ProbDist<F> {
        ProbDist::softmax(&self.log_scores(x))
    }
}

pub fn predict_nb<F: Scalar>(model: &NaiveBayesModel<F>, x: &SparseVector<F>) -> ProbDist<F> {
    model.predict(x)
}
