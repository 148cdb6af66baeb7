use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SmoteError {
    #[error("minority class has {0} samples, need at least 2")]
    TooFewMinoritySamples(usize),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("points have inconsistent dimensions")]
    DimMismatch,
}

/// Oversamples `minority` up to `target_count` by interpolating each chosen
/// sample towards one of its `k` nearest minority neighbours.
///
/// Originals are returned first and unchanged, followed by the synthetic
/// points.
pub fn smote<F: Scalar, L: Clone + PartialEq>(
    points: &[(Vec<F>, L)],
    minority: &L,
    target_count: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<F>, L)>, SmoteError> {
    smote_with_lambda(points, minority, target_count, k, seed, |rng| F::of(rng.gen::<f64>()))
}

/// [`smote`] with a caller-supplied interpolation factor, for tests and
/// controlled augmentation. `lambda` must return values in `[0, 1]`.
pub fn smote_with_lambda<F, L, G>(
    points: &[(Vec<F>, L)],
    minority: &L,
    target_count: usize,
    k: usize,
    seed: u64,
    mut lambda: G,
) -> Result<Vec<(Vec<F>, L)>, SmoteError>
where
    F: Scalar,
    L: Clone + PartialEq,
    G: FnMut(&mut ChaCha8Rng) -> F,
{
    if k == 0 {
        return Err(SmoteError::InvalidK);
    }
    let members: Vec<usize> = points.iter().enumerate().filter(|(_, (_, l))| l == minority).map(|(i, _)| i).collect();
    if members.len() < 2 {
        return Err(SmoteError::TooFewMinoritySamples(members.len()));
    }
    let dim = points[members[0]].0.len();
    if members.iter().any(|&i| points[i].0.len() != dim) {
        return Err(SmoteError::DimMismatch);
    }
    let mut out = points.to_vec();
    if target_count <= members.len() {
        return Ok(out);
    }

    let neighbours = nearest_neighbours(points, &members, k.min(members.len() - 1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in members.len()..target_count {
        let pick = rng.gen_range(0..members.len());
        let nbrs = &neighbours[pick];
        let q = nbrs[rng.gen_range(0..nbrs.len())];
        let lam = lambda(&mut rng);
        let p = &points[members[pick]].0;
        let q = &points[q].0;
        let s = p.iter().zip(q).map(|(a, b)| *a + lam * (*b - *a)).collect();
        out.push((s, minority.clone()));
    }
    Ok(out)
}

/// For each minority member, the point indices of its `k` nearest other
/// members by Euclidean distance, ties broken by lower index.
fn nearest_neighbours<F: Scalar, L>(points: &[(Vec<F>, L)], members: &[usize], k: usize) -> Vec<Vec<usize>> {
    members
        .iter()
        .map(|&i| {
            let mut d: Vec<(F, usize)> = members
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| {
                    let dist = points[i].0.iter().zip(&points[j].0).map(|(a, b)| (*a - *b) * (*a - *b)).sum::<F>();
                    (dist, j)
                })
                .collect();
            d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}
