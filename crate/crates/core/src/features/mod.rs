//! Sparse TF-IDF vectors, signed-hash dense embeddings, cosine similarity
//! and SMOTE oversampling.

mod smote;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::textprep::{self, NormalizerConfig};

pub use smote::{smote, smote_with_lambda, SmoteError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("corpus has no non-empty document")]
    EmptyCorpus,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
}

/// Sparse vector; zero weights are never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct SparseVector<F> {
    entries: BTreeMap<usize, F>,
    dim: usize,
}

impl<F: Scalar> SparseVector<F> {
    pub fn zeros(dim: usize) -> Self {
        Self { entries: BTreeMap::new(), dim }
    }

    /// Builds from `(index, weight)` pairs, summing repeated indices and
    /// dropping zeros. Panics on an out-of-range index.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, F)>) -> Self {
        let mut entries = BTreeMap::new();
        for (i, w) in pairs {
            assert!(i < dim, "index {i} out of range for dim {dim}");
            let e = entries.entry(i).or_insert_with(F::zero);
            *e = *e + w;
        }
        entries.retain(|_, w| *w != F::zero());
        Self { entries, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: usize) -> F {
        self.entries.get(&index).copied().unwrap_or_else(F::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, F)> + '_ {
        self.entries.iter().map(|(i, w)| (*i, *w))
    }

    pub fn norm(&self) -> F {
        self.entries.values().map(|w| *w * *w).sum::<F>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> F {
        let (small, large) = if self.nnz() <= other.nnz() { (self, other) } else { (other, self) };
        small.iter().map(|(i, w)| w * large.get(i)).sum()
    }

    /// Dot product against a dense row.
    pub fn dot_dense(&self, dense: &[F]) -> F {
        self.iter().map(|(i, w)| w * dense[i]).sum()
    }

    pub fn to_dense(&self) -> Vec<F> {
        let mut v = vec![F::zero(); self.dim];
        for (i, w) in self.iter() {
            v[i] = w;
        }
        v
    }

    pub fn scaled(&self, factor: F) -> Self {
        Self::from_pairs(self.dim, self.iter().map(|(i, w)| (i, w * factor)))
    }
}

/// Fixed-length dense vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct DenseVector<F> {
    pub values: Vec<F>,
}

impl<F: Scalar> DenseVector<F> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> F {
        self.values.iter().map(|v| *v * *v).sum::<F>().sqrt()
    }
}

/// Common surface for cosine similarity.
pub trait FeatureVector<F: Scalar> {
    fn dim(&self) -> usize;
    fn dot_with(&self, other: &Self) -> F;
    fn l2_norm(&self) -> F;
}

impl<F: Scalar> FeatureVector<F> for SparseVector<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn dot_with(&self, other: &Self) -> F {
        self.dot(other)
    }
    fn l2_norm(&self) -> F {
        self.norm()
    }
}

impl<F: Scalar> FeatureVector<F> for DenseVector<F> {
    fn dim(&self) -> usize {
        self.values.len()
    }
    fn dot_with(&self, other: &Self) -> F {
        self.values.iter().zip(&other.values).map(|(a, b)| *a * *b).sum()
    }
    fn l2_norm(&self) -> F {
        self.norm()
    }
}

/// `dot(a, b) / (|a| |b|)`, or 0 when either norm is 0.
pub fn cosine<F: Scalar, V: FeatureVector<F>>(a: &V, b: &V) -> Result<F, FeatureError> {
    if a.dim() != b.dim() {
        return Err(FeatureError::DimMismatch(a.dim(), b.dim()));
    }
    let (na, nb) = (a.l2_norm(), b.l2_norm());
    if na == F::zero() || nb == F::zero() {
        return Ok(F::zero());
    }
    // Multiplying the norms keeps the expression symmetric in a and b.
    let c = a.dot_with(b) / (na * nb);
    Ok(c.max(-F::one()).min(F::one()))
}

/// Fitted TF-IDF vocabulary and smoothed inverse document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct TfIdfModel<F> {
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<F>,
}

impl<F: Scalar> TfIdfModel<F> {
    /// Vocabulary is every distinct token, indexed by lexicographic rank;
    /// `idf = ln((1 + N) / (1 + df)) + 1`.
    pub fn fit<S: AsRef<str>>(docs: &[Vec<S>]) -> Result<Self, FeatureError> {
        if docs.iter().all(|d| d.is_empty()) {
            return Err(FeatureError::EmptyCorpus);
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in docs {
            let mut distinct: Vec<&str> = doc.iter().map(AsRef::as_ref).collect();
            distinct.sort_unstable();
            distinct.dedup();
            for t in distinct {
                *df.entry(t.to_string()).or_default() += 1;
            }
        }
        let n = F::of_usize(docs.len());
        let mut vocabulary = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (i, (term, count)) in df.into_iter().enumerate() {
            vocabulary.insert(term, i);
            idf.push(((F::one() + n) / (F::one() + F::of_usize(count))).ln() + F::one());
        }
        Ok(Self { vocabulary, idf })
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    /// Raw in-vocabulary term counts.
    pub fn counts<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVector<F> {
        SparseVector::from_pairs(self.dim(), tokens.iter().filter_map(|t| self.vocabulary.get(t.as_ref()).map(|&i| (i, F::one()))))
    }

    /// `count * idf`, L2-normalized; out-of-vocabulary tokens are ignored.
    pub fn transform<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVector<F> {
        let counts = self.counts(tokens);
        let weighted = SparseVector::from_pairs(self.dim(), counts.iter().map(|(i, c)| (i, c * self.idf[i])));
        let norm = weighted.norm();
        if norm == F::zero() {
            return weighted;
        }
        SparseVector::from_pairs(self.dim(), weighted.iter().map(|(i, w)| (i, w / norm)))
    }
}

/// A TF-IDF model together with the normalizer that produced its tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct TextVectorizer<F> {
    #[serde(flatten)]
    pub model: TfIdfModel<F>,
    pub normalizer_config: NormalizerConfig,
    pub stopword_hash: String,
}

impl<F: Scalar> TextVectorizer<F> {
    pub fn fit<S: AsRef<str>>(texts: &[S], normalizer_config: NormalizerConfig) -> Result<Self, FeatureError> {
        let docs: Vec<Vec<String>> = texts.iter().map(|t| textprep::normalize(t.as_ref(), &normalizer_config)).collect();
        Ok(Self { model: TfIdfModel::fit(&docs)?, normalizer_config, stopword_hash: textprep::stopword_hash().to_string() })
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        textprep::normalize(text, &self.normalizer_config)
    }

    pub fn tfidf(&self, text: &str) -> SparseVector<F> {
        self.model.transform(&self.tokens(text))
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }
}

pub const FNV_OFFSET_BASIS: u64 = 14_695_981_039_346_656_037;
pub const FNV_PRIME: u64 = 1_099_511_628_211;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

pub const DEFAULT_EMBEDDING_DIM: usize = 256;

/// Signed feature hashing: each token adds +1 or -1 (bit 63 of its FNV-1a-64
/// hash) at `hash mod dim`; the sum is L2-normalized.
pub fn hashed_embedding<F: Scalar, S: AsRef<str>>(tokens: &[S], dim: usize) -> DenseVector<F> {
    assert!(dim >= 2, "embedding dim must be at least 2");
    let mut values = vec![F::zero(); dim];
    for t in tokens {
        let h = fnv1a64(t.as_ref().as_bytes());
        let slot = (h % dim as u64) as usize;
        if h >> 63 == 0 {
            values[slot] = values[slot] + F::one();
        } else {
            values[slot] = values[slot] - F::one();
        }
    }
    let norm = values.iter().map(|v| *v * *v).sum::<F>().sqrt();
    if norm > F::zero() {
        for v in &mut values {
            *v = *v / norm;
        }
    }
    DenseVector { values }
}

/// Maps normalized tokens to dense vectors for similarity search.
pub trait Embedder<F: Scalar>: Send + Sync {
    fn embed(&self, tokens: &[String]) -> DenseVector<F>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedEmbedder {
    pub dim: usize,
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_EMBEDDING_DIM }
    }
}

impl<F: Scalar> Embedder<F> for HashedEmbedder {
    fn embed(&self, tokens: &[String]) -> DenseVector<F> {
        hashed_embedding(tokens, self.dim)
    }
}
