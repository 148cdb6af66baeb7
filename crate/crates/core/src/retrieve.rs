//! BM25 retrieval over conversation histories and BM25 + embedding-similarity
//! (BES) fusion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{LabelCodec, StrategyLabel};
use crate::features::{cosine, Embedder};
use crate::prob::{argmax, rank_scores, ProbDist};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrieveError {
    #[error("corpus has no documents")]
    EmptyCorpus,
    #[error("{0} histories but {1} labels")]
    LabelMismatch(usize, usize),
    #[error("document id {0} out of range")]
    BadDocId(usize),
    #[error("index is empty")]
    EmptyIndex,
    #[error("invalid BES configuration: {0}")]
    InvalidConfig(String),
    #[error("label {0} is not in the prior's codec")]
    CodecMismatch(StrategyLabel),
    #[error("corrupt index: {0}")]
    Corrupt(String),
}

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// Serialized form of the index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
struct IndexData<F> {
    postings: BTreeMap<String, Vec<(usize, u32)>>,
    doc_lengths: Vec<usize>,
    doc_labels: Vec<StrategyLabel>,
    n_docs: usize,
    avgdl: F,
    k1: F,
    b: F,
}

/// Inverted index with document statistics. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IndexData<F>", into = "IndexData<F>", bound = "F: Scalar")]
pub struct Bm25Index<F> {
    data: IndexData<F>,
    /// Per-document bag of terms, sorted by term, each repeated `tf` times.
    doc_terms: Vec<Vec<String>>,
}

impl<F: Scalar> TryFrom<IndexData<F>> for Bm25Index<F> {
    type Error = RetrieveError;

    fn try_from(data: IndexData<F>) -> Result<Self, Self::Error> {
        let n = data.n_docs;
        if data.doc_lengths.len() != n || data.doc_labels.len() != n {
            return Err(RetrieveError::Corrupt("document statistics disagree with n_docs".into()));
        }
        let mut doc_terms = vec![Vec::new(); n];
        let mut lengths = vec![0usize; n];
        for (term, list) in &data.postings {
            for &(doc, tf) in list {
                if doc >= n {
                    return Err(RetrieveError::BadDocId(doc));
                }
                doc_terms[doc].extend(std::iter::repeat_n(term.clone(), tf as usize));
                lengths[doc] += tf as usize;
            }
        }
        if lengths != data.doc_lengths {
            return Err(RetrieveError::Corrupt("postings do not add up to the document lengths".into()));
        }
        if n > 0 {
            let mean = F::of_usize(lengths.iter().sum()) / F::of_usize(n);
            if (mean - data.avgdl).abs() > F::of(1e-9) {
                return Err(RetrieveError::Corrupt("avgdl is not the mean document length".into()));
            }
        }
        Ok(Self { data, doc_terms })
    }
}

impl<F: Scalar> From<Bm25Index<F>> for IndexData<F> {
    fn from(index: Bm25Index<F>) -> Self {
        index.data
    }
}

/// Builds an index with `k1 = 1.2` and `b = 0.75`.
pub fn build_index<F: Scalar, S: AsRef<str>>(histories: &[Vec<S>], labels: &[StrategyLabel]) -> Result<Bm25Index<F>, RetrieveError> {
    Bm25Index::build(histories, labels, F::of(DEFAULT_K1), F::of(DEFAULT_B))
}

impl<F: Scalar> Bm25Index<F> {
    pub fn build<S: AsRef<str>>(histories: &[Vec<S>], labels: &[StrategyLabel], k1: F, b: F) -> Result<Self, RetrieveError> {
        if histories.is_empty() {
            return Err(RetrieveError::EmptyCorpus);
        }
        if histories.len() != labels.len() {
            return Err(RetrieveError::LabelMismatch(histories.len(), labels.len()));
        }
        let mut postings: BTreeMap<String, Vec<(usize, u32)>> = BTreeMap::new();
        for (doc, tokens) in histories.iter().enumerate() {
            let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t.as_ref()).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term.to_string()).or_default().push((doc, count));
            }
        }
        let doc_lengths: Vec<usize> = histories.iter().map(Vec::len).collect();
        let n_docs = histories.len();
        let avgdl = F::of_usize(doc_lengths.iter().sum()) / F::of_usize(n_docs);
        let data = IndexData { postings, doc_lengths, doc_labels: labels.to_vec(), n_docs, avgdl, k1, b };
        Self::try_from(data)
    }

    pub fn n_docs(&self) -> usize {
        self.data.n_docs
    }

    pub fn avgdl(&self) -> F {
        self.data.avgdl
    }

    pub fn doc_lengths(&self) -> &[usize] {
        &self.data.doc_lengths
    }

    pub fn doc_label(&self, doc: usize) -> StrategyLabel {
        self.data.doc_labels[doc]
    }

    pub fn postings(&self, term: &str) -> &[(usize, u32)] {
        self.data.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn doc_terms(&self, doc: usize) -> &[String] {
        &self.doc_terms[doc]
    }

    pub fn k1(&self) -> F {
        self.data.k1
    }

    pub fn b(&self) -> F {
        self.data.b
    }

    /// Non-negative IDF: `ln(1 + (N - df + 0.5) / (df + 0.5))`.
    pub fn idf(&self, term: &str) -> F {
        let df = F::of_usize(self.postings(term).len());
        let n = F::of_usize(self.data.n_docs);
        let half = F::of(0.5);
        (F::one() + (n - df + half) / (df + half)).ln()
    }

    fn term_weight(&self, idf: F, tf: u32, doc: usize) -> F {
        let tf = F::of(f64::from(tf));
        let (k1, b) = (self.data.k1, self.data.b);
        let dl = F::of_usize(self.data.doc_lengths[doc]);
        let norm = if self.data.avgdl > F::zero() { dl / self.data.avgdl } else { F::zero() };
        idf * tf * (k1 + F::one()) / (tf + k1 * (F::one() - b + b * norm))
    }

    /// Sums the contribution of every query token (repeats count again).
    pub fn score<S: AsRef<str>>(&self, query: &[S], doc: usize) -> Result<F, RetrieveError> {
        if doc >= self.data.n_docs {
            return Err(RetrieveError::BadDocId(doc));
        }
        let mut total = F::zero();
        for t in query {
            let list = self.postings(t.as_ref());
            if let Ok(pos) = list.binary_search_by_key(&doc, |(d, _)| *d) {
                total = total + self.term_weight(self.idf(t.as_ref()), list[pos].1, doc);
            }
        }
        Ok(total)
    }

    /// Exact top-k by term-at-a-time accumulation; ties by lower doc id.
    pub fn top_k<S: AsRef<str>>(&self, query: &[S], k: usize) -> Vec<(usize, F)> {
        let mut scores = vec![F::zero(); self.data.n_docs];
        for t in query {
            let idf = self.idf(t.as_ref());
            for &(doc, tf) in self.postings(t.as_ref()) {
                scores[doc] = scores[doc] + self.term_weight(idf, tf, doc);
            }
        }
        let mut ranked = rank_scores(&scores);
        ranked.truncate(k);
        ranked
    }
}

pub fn bm25_score<F: Scalar, S: AsRef<str>>(index: &Bm25Index<F>, query: &[S], doc: usize) -> Result<F, RetrieveError> {
    index.score(query, doc)
}

pub fn top_k<F: Scalar, S: AsRef<str>>(index: &Bm25Index<F>, query: &[S], k: usize) -> Vec<(usize, F)> {
    index.top_k(query, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesConfig {
    pub alpha: f64,
    pub k: usize,
}

impl Default for BesConfig {
    fn default() -> Self {
        Self { alpha: 0.2, k: 5 }
    }
}

impl BesConfig {
    pub fn validate(&self) -> Result<(), RetrieveError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(RetrieveError::InvalidConfig(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.k == 0 {
            return Err(RetrieveError::InvalidConfig("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// `(alpha * bm25 + (1 - alpha) * emb) * prob`.
pub fn bes_candidate_score<F: Scalar>(alpha: F, bm25_norm: F, emb_sim: F, strategy_prob: F) -> F {
    (alpha * bm25_norm + (F::one() - alpha) * emb_sim) * strategy_prob
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct BesCandidate<F> {
    pub doc_id: usize,
    pub label: StrategyLabel,
    pub bm25: F,
    pub bm25_norm: F,
    pub emb_sim: F,
    pub score: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BesOutcome<F> {
    pub label: StrategyLabel,
    /// Every codec label with its best candidate score, descending.
    pub ranked: Vec<(StrategyLabel, F)>,
    pub candidates: Vec<BesCandidate<F>>,
    /// Per-label maxima normalized to sum to one, or the prior if all are zero.
    pub distribution: ProbDist<F>,
    /// Label of the BM25 rank-1 candidate.
    pub bm25_vote: StrategyLabel,
    /// Label of the most embedding-similar candidate in the pool.
    pub embedding_vote: StrategyLabel,
}

/// Recommends a strategy for `query` from its BM25 neighbourhood.
///
/// BM25 scores of the `k` candidates are min-max normalized (all equal maps
/// to 1), cosine similarities are clamped at 0, and each label keeps the
/// maximum candidate score. Ties go to the lower codec index.
pub fn bes_recommend<F: Scalar>(
    index: &Bm25Index<F>,
    embedder: &dyn Embedder<F>,
    prior: &ProbDist<F>,
    codec: &LabelCodec,
    query: &[String],
    config: &BesConfig,
) -> Result<BesOutcome<F>, RetrieveError> {
    config.validate()?;
    if index.n_docs() == 0 {
        return Err(RetrieveError::EmptyIndex);
    }
    if prior.len() != codec.len() {
        return Err(RetrieveError::InvalidConfig(format!("prior has {} entries, codec {}", prior.len(), codec.len())));
    }
    let top = index.top_k(query, config.k);
    let max = top.iter().map(|(_, s)| *s).fold(F::neg_infinity(), F::max);
    let min = top.iter().map(|(_, s)| *s).fold(F::infinity(), F::min);
    let alpha = F::of(config.alpha);
    let q = embedder.embed(query);

    let mut per_label = vec![F::zero(); codec.len()];
    let mut candidates = Vec::with_capacity(top.len());
    for &(doc_id, bm25) in &top {
        let label = index.doc_label(doc_id);
        let li = codec.encode(label).ok_or(RetrieveError::CodecMismatch(label))?;
        let bm25_norm = if max > min { (bm25 - min) / (max - min) } else { F::one() };
        let d = embedder.embed(index.doc_terms(doc_id));
        let emb_sim = cosine(&q, &d).unwrap_or_else(|_| F::zero()).max(F::zero());
        let score = bes_candidate_score(alpha, bm25_norm, emb_sim, prior.get(li));
        if score > per_label[li] {
            per_label[li] = score;
        }
        candidates.push(BesCandidate { doc_id, label, bm25, bm25_norm, emb_sim, score });
    }

    let chosen = argmax(&per_label);
    let ranked = rank_scores(&per_label).into_iter().map(|(i, s)| (codec.decode(i).expect("index within codec"), s)).collect();
    let distribution = ProbDist::from_weights(&per_label).unwrap_or_else(|| prior.clone());
    let bm25_vote = candidates[0].label;
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.emb_sim > candidates[best].emb_sim {
            best = i;
        }
    }
    Ok(BesOutcome {
        label: codec.decode(chosen).expect("index within codec"),
        ranked,
        embedding_vote: candidates[best].label,
        bm25_vote,
        candidates,
        distribution,
    })
}
