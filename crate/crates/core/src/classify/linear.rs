use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::features::SparseVector;
use crate::prob::ProbDist;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    SoftmaxLr,
    SvmOvr,
}

/// `K x D` weights plus per-class bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct LinearModel<F> {
    pub weights: Vec<Vec<F>>,
    pub bias: Vec<F>,
    pub kind: LinearKind,
}

impl<F: Scalar> LinearModel<F> {
    pub fn zeros(n_classes: usize, dim: usize, kind: LinearKind) -> Self {
        Self { weights: vec![vec![F::zero(); dim]; n_classes], bias: vec![F::zero(); n_classes], kind }
    }

    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn margins(&self, x: &SparseVector<F>) -> Vec<F> {
        self.weights.iter().zip(&self.bias).map(|(w, b)| x.dot_dense(w) + *b).collect()
    }

    /// Softmax over margins. For `svm_ovr` this is an integration convention
    /// so the model can take part in probabilistic fusion.
    pub fn predict(&self, x: &SparseVector<F>) -> ProbDist<F> {
        ProbDist::softmax(&self.margins(x))
    }

    pub fn is_finite(&self) -> bool {
        self.bias.iter().chain(self.weights.iter().flatten()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftmaxConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for SoftmaxConfig {
    fn default() -> Self {
        Self { learning_rate: 0.1, epochs: 200, l2: 1e-4 }
    }
}

#[derive(Debug, Clone)]
pub struct SoftmaxFit<F> {
    pub model: LinearModel<F>,
    /// Objective before the first update and after every epoch.
    pub losses: Vec<F>,
}

/// Mean cross-entropy plus `l2 / 2 * |W|^2` (bias unregularized), with its
/// gradient.
pub struct Objective<F> {
    pub loss: F,
    pub grad_weights: Vec<Vec<F>>,
    pub grad_bias: Vec<F>,
}

pub fn softmax_objective<F: Scalar>(model: &LinearModel<F>, x: &[SparseVector<F>], y: &[usize], l2: F) -> Objective<F> {
    let (ce, grad_weights, grad_bias) = cross_entropy_and_grad(model, x, y);
    let half = F::of(0.5);
    let sq: F = model.weights.iter().flatten().map(|w| *w * *w).sum();
    let grad_weights =
        grad_weights.into_iter().zip(&model.weights).map(|(g, w)| g.into_iter().zip(w).map(|(gi, wi)| gi + l2 * *wi).collect()).collect();
    Objective { loss: ce + half * l2 * sq, grad_weights, grad_bias }
}

fn cross_entropy_and_grad<F: Scalar>(model: &LinearModel<F>, x: &[SparseVector<F>], y: &[usize]) -> (F, Vec<Vec<F>>, Vec<F>) {
    let k = model.n_classes();
    let n = F::of_usize(x.len());
    let mut loss = F::zero();
    let mut gw = vec![vec![F::zero(); model.dim()]; k];
    let mut gb = vec![F::zero(); k];
    for (xi, &yi) in x.iter().zip(y) {
        let margins = model.margins(xi);
        let max = margins.iter().copied().fold(F::neg_infinity(), F::max);
        let lse = max + margins.iter().map(|m| (*m - max).exp()).sum::<F>().ln();
        loss = loss + (lse - margins[yi]);
        for c in 0..k {
            let residual = (margins[c] - lse).exp() - if c == yi { F::one() } else { F::zero() };
            let r = residual / n;
            gb[c] = gb[c] + r;
            for (t, v) in xi.iter() {
                gw[c][t] = gw[c][t] + r * v;
            }
        }
    }
    (loss / n, gw, gb)
}

/// Full-batch gradient descent from zero weights. The L2 term is applied as a
/// proximal step, `W <- (W - lr * grad_ce) / (1 + lr * l2)`, which stays
/// stable for arbitrarily large `l2`.
pub fn train_softmax<F: Scalar>(
    x: &[SparseVector<F>],
    y: &[usize],
    n_classes: usize,
    config: &SoftmaxConfig,
) -> Result<SoftmaxFit<F>, ClassifyError> {
    check_inputs(x, y, n_classes)?;
    let dim = x[0].dim();
    let lr = F::of(config.learning_rate);
    let l2 = F::of(config.l2);
    let shrink = F::one() / (F::one() + lr * l2);
    let mut model = LinearModel::zeros(n_classes, dim, LinearKind::SoftmaxLr);
    let mut losses = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..=config.epochs {
        let (ce, gw, gb) = cross_entropy_and_grad(&model, x, y);
        let sq: F = model.weights.iter().flatten().map(|w| *w * *w).sum();
        let loss = ce + F::of(0.5) * l2 * sq;
        if !loss.is_finite() {
            return Err(ClassifyError::NonFiniteLoss { epoch });
        }
        losses.push(loss);
        if epoch == config.epochs {
            break;
        }
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            for (wi, gi) in w.iter_mut().zip(g) {
                *wi = (*wi - lr * *gi) * shrink;
            }
        }
        for (b, g) in model.bias.iter_mut().zip(&gb) {
            *b = *b - lr * *g;
        }
    }
    if !model.is_finite() {
        return Err(ClassifyError::NonFiniteLoss { epoch: config.epochs });
    }
    Ok(SoftmaxFit { model, losses })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { lambda: 1e-3, epochs: 50, seed: 0 }
    }
}

/// One-vs-rest linear SVM trained with Pegasos SGD on the hinge loss, step
/// `1 / (lambda * t)`. The bias is an extra constant feature and is
/// regularized with the weights.
pub fn train_svm_ovr<F: Scalar>(
    x: &[SparseVector<F>],
    y: &[usize],
    n_classes: usize,
    config: &SvmConfig,
) -> Result<LinearModel<F>, ClassifyError> {
    check_inputs(x, y, n_classes)?;
    let dim = x[0].dim();
    let lambda = F::of(config.lambda);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = LinearModel::zeros(n_classes, dim, LinearKind::SvmOvr);
    let mut order: Vec<usize> = (0..x.len()).collect();
    for c in 0..n_classes {
        // w = scale * v keeps the per-step shrink O(1).
        let mut v = vec![F::zero(); dim + 1];
        let mut scale = F::one();
        let mut t = 0usize;
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = F::one() / (lambda * F::of_usize(t));
                let target = if y[i] == c { F::one() } else { -F::one() };
                let margin = target * scale * (x[i].dot_dense(&v[..dim]) + v[dim]);
                scale = scale * (F::one() - eta * lambda);
                if scale == F::zero() {
                    v.iter_mut().for_each(|e| *e = F::zero());
                    scale = F::one();
                }
                if margin < F::one() {
                    let step = eta * target / scale;
                    for (j, xv) in x[i].iter() {
                        v[j] = v[j] + step * xv;
                    }
                    v[dim] = v[dim] + step;
                }
                if scale < F::of(1e-9) {
                    v.iter_mut().for_each(|e| *e = *e * scale);
                    scale = F::one();
                }
            }
        }
        model.weights[c] = v[..dim].iter().map(|e| *e * scale).collect();
        model.bias[c] = v[dim] * scale;
    }
    Ok(model)
}

fn check_inputs<F: Scalar>(x: &[SparseVector<F>], y: &[usize], n_classes: usize) -> Result<(), ClassifyError> {
    if x.len() != y.len() {
        return Err(ClassifyError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(ClassifyError::EmptyTrainingSet);
    }
    if n_classes < 2 {
        return Err(ClassifyError::TooFewClasses(n_classes));
    }
    if let Some(&c) = y.iter().find(|c| **c >= n_classes) {
        return Err(ClassifyError::LabelOutOfRange(c));
    }
    Ok(())
}
