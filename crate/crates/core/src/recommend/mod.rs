//! Strategy recommenders: label prior (LPD), BES, an external scorer, and
//! the two hybrid combinations.

mod scorer;

pub use scorer::{query_scorer, HttpScorer, MockScorer, ScoreRequest, ScoreResponse, Scorer, ScorerEndpoint, ScorerError};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{LabelCodec, StrategyLabel};
use crate::features::Embedder;
use crate::prob::{rank_scores, ProbDist};
use crate::retrieve::{bes_recommend, BesConfig, BesOutcome, Bm25Index, RetrieveError};
use crate::scalar::Scalar;
use crate::textprep::{normalize, NormalizerConfig};

#[derive(Debug, Error)]
pub enum RecommendError {
    #[error("distributions disagree on label count: {0}")]
    CodecMismatch(String),
    #[error("invalid vote weights: {0}")]
    InvalidWeights(String),
    #[error("no source left to vote with")]
    NoSources,
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(#[source] ScorerError),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lpd,
    Bes,
    HybridVote,
    HybridProb,
    Scorer,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Lpd, Method::Bes, Method::HybridVote, Method::HybridProb, Method::Scorer];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lpd => "lpd",
            Method::Bes => "bes",
            Method::HybridVote => "hybrid_vote",
            Method::HybridProb => "hybrid_prob",
            Method::Scorer => "scorer",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method {s:?} (expected one of lpd, bes, hybrid_vote, hybrid_prob, scorer)"))
    }
}

pub const SOURCE_SCORER: &str = "scorer";
pub const SOURCE_LPD: &str = "lpd";
pub const SOURCE_BES: &str = "bes";
pub const SOURCE_BM25: &str = "bm25";
pub const SOURCE_EMBEDDING: &str = "embedding";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct RankedLabel<F> {
    pub label: StrategyLabel,
    pub score: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Recommendation<F> {
    pub chosen: StrategyLabel,
    /// Descending; `chosen` is always first.
    pub ranked: Vec<RankedLabel<F>>,
    pub per_source: BTreeMap<String, ProbDist<F>>,
    pub method: Method,
    /// Set when the scorer was configured but could not be reached and the
    /// remaining sources were used instead.
    #[serde(default)]
    pub degraded: bool,
}

impl<F: Scalar> Recommendation<F> {
    fn from_scores(scores: &[F], codec: &LabelCodec, method: Method) -> Self {
        let ranked: Vec<RankedLabel<F>> = rank_scores(scores)
            .into_iter()
            .map(|(i, score)| RankedLabel { label: codec.decode(i).expect("index within codec"), score })
            .collect();
        Self { chosen: ranked[0].label, ranked, per_source: BTreeMap::new(), method, degraded: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoteWeights {
    pub scorer: f64,
    pub lpd: f64,
    pub bes: f64,
}

impl Default for VoteWeights {
    fn default() -> Self {
        Self { scorer: 0.5, lpd: 0.2, bes: 0.3 }
    }
}

impl VoteWeights {
    pub fn validate(&self) -> Result<(), RecommendError> {
        let w = [self.scorer, self.lpd, self.bes];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(RecommendError::InvalidWeights(format!("{self:?} has a negative or non-finite entry")));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(RecommendError::InvalidWeights(format!("{self:?} does not sum to 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum LpdMode {
    Argmax,
    Sample { seed: u64 },
}

/// Seeded draws from a label prior.
pub struct LpdSampler {
    rng: ChaCha8Rng,
}

impl LpdSampler {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn draw<F: Scalar>(&mut self, prior: &ProbDist<F>) -> usize {
        let weights: Vec<f64> = prior.probs().iter().map(|p| p.to_f64().unwrap_or(0.0)).collect();
        WeightedIndex::new(&weights).expect("a valid prior has positive mass").sample(&mut self.rng)
    }
}

/// Label-prior recommendation. The ranked list is the prior sorted
/// descending, with a sampled label moved to the front.
pub fn lpd_recommend<F: Scalar>(prior: &ProbDist<F>, codec: &LabelCodec, mode: LpdMode) -> Result<Recommendation<F>, RecommendError> {
    check_len(prior, codec, SOURCE_LPD)?;
    let mut rec = Recommendation::from_scores(prior.probs(), codec, Method::Lpd);
    if let LpdMode::Sample { seed } = mode {
        let label = codec.decode(LpdSampler::new(seed).draw(prior)).expect("index within codec");
        let pos = rec.ranked.iter().position(|r| r.label == label).expect("label is ranked");
        let picked = rec.ranked.remove(pos);
        rec.ranked.insert(0, picked);
        rec.chosen = label;
    }
    rec.per_source.insert(SOURCE_LPD.into(), prior.clone());
    Ok(rec)
}

/// Wraps a BES outcome as a recommendation.
pub fn bes_to_recommendation<F: Scalar>(outcome: &BesOutcome<F>) -> Recommendation<F> {
    let ranked: Vec<RankedLabel<F>> = outcome.ranked.iter().map(|(label, score)| RankedLabel { label: *label, score: *score }).collect();
    let mut per_source = BTreeMap::new();
    per_source.insert(SOURCE_BES.to_string(), outcome.distribution.clone());
    Recommendation { chosen: outcome.label, ranked, per_source, method: Method::Bes, degraded: false }
}

/// Four-voter majority. The scorer wins any tie it is part of; other ties
/// and a missing scorer fall back to the lower label index.
pub fn hybrid_vote<F: Scalar>(
    bm25: StrategyLabel,
    embedding: StrategyLabel,
    lpd: StrategyLabel,
    scorer: Option<StrategyLabel>,
    codec: &LabelCodec,
) -> Result<Recommendation<F>, RecommendError> {
    let mut voters = vec![(SOURCE_BM25, bm25), (SOURCE_EMBEDDING, embedding), (SOURCE_LPD, lpd)];
    if let Some(s) = scorer {
        voters.push((SOURCE_SCORER, s));
    }
    let k = codec.len();
    let mut counts = vec![0usize; k];
    let mut per_source = BTreeMap::new();
    for (name, label) in &voters {
        let i = codec.encode(*label).ok_or_else(|| RecommendError::CodecMismatch(format!("{label} not in codec")))?;
        counts[i] += 1;
        per_source.insert(name.to_string(), ProbDist::one_hot(k, i));
    }
    let best = *counts.iter().max().expect("non-empty codec");
    let winner = match scorer.and_then(|s| codec.encode(s)) {
        Some(si) if counts[si] == best => si,
        _ => counts.iter().position(|c| *c == best).expect("maximum exists"),
    };
    let n = F::of_usize(voters.len());
    let shares: Vec<F> = counts.iter().map(|c| F::of_usize(*c) / n).collect();
    let mut rec = Recommendation::from_scores(&shares, codec, Method::HybridVote);
    let pos = rec.ranked.iter().position(|r| r.label == codec.decode(winner).unwrap()).unwrap();
    let picked = rec.ranked.remove(pos);
    rec.ranked.insert(0, picked);
    rec.chosen = rec.ranked[0].label;
    rec.per_source = per_source;
    rec.degraded = scorer.is_none();
    Ok(rec)
}

/// Weighted sum of the source distributions. With the scorer missing the
/// remaining weights are rescaled to sum to one.
///
/// The sum is written relative to the first source, `p0 + Σ w_j (p_j - p0)`,
/// so identical inputs or a single full-weight source come back unchanged.
pub fn prob_vote<F: Scalar>(
    scorer: Option<&ProbDist<F>>,
    lpd: &ProbDist<F>,
    bes: &ProbDist<F>,
    weights: &VoteWeights,
    codec: &LabelCodec,
) -> Result<Recommendation<F>, RecommendError> {
    weights.validate()?;
    let mut sources: Vec<(&str, f64, &ProbDist<F>)> = Vec::new();
    if let Some(s) = scorer {
        sources.push((SOURCE_SCORER, weights.scorer, s));
    }
    sources.push((SOURCE_LPD, weights.lpd, lpd));
    sources.push((SOURCE_BES, weights.bes, bes));
    for (name, _, d) in &sources {
        check_len(d, codec, name)?;
    }
    let total: f64 = sources.iter().map(|(_, w, _)| w).sum();
    if total <= 0.0 {
        return Err(RecommendError::NoSources);
    }
    // Drop zero-weight sources so they cannot perturb the anchor.
    let active: Vec<(F, &ProbDist<F>)> = sources.iter().filter(|(_, w, _)| *w > 0.0).map(|(_, w, d)| (F::of(*w / total), *d)).collect();
    let anchor = active[0].1;
    let combined: Vec<F> = (0..codec.len())
        .map(|i| {
            let a = anchor.get(i);
            let v = active[1..].iter().fold(a, |acc, (w, d)| acc + *w * (d.get(i) - a));
            v.max(F::zero())
        })
        .collect();
    let dist = ProbDist::new(combined).map_err(|e| RecommendError::CodecMismatch(e.to_string()))?;
    let mut rec = Recommendation::from_scores(dist.probs(), codec, Method::HybridProb);
    for (name, _, d) in &sources {
        rec.per_source.insert(name.to_string(), (*d).clone());
    }
    rec.per_source.insert("combined".into(), dist);
    rec.degraded = scorer.is_none();
    Ok(rec)
}

fn check_len<F: Scalar>(d: &ProbDist<F>, codec: &LabelCodec, source: &str) -> Result<(), RecommendError> {
    if d.len() != codec.len() {
        return Err(RecommendError::CodecMismatch(format!("{source} has {} entries, codec {}", d.len(), codec.len())));
    }
    Ok(())
}

/// Everything the recommenders need, shared read-only across requests.
pub struct Recommender<F: Scalar> {
    pub index: Bm25Index<F>,
    pub embedder: Arc<dyn Embedder<F>>,
    pub prior: ProbDist<F>,
    pub codec: LabelCodec,
    pub normalizer: NormalizerConfig,
    pub scorer: Option<Arc<dyn Scorer<F>>>,
    pub bes: BesConfig,
    pub weights: VoteWeights,
    pub lpd_mode: LpdMode,
}

impl<F: Scalar> Recommender<F> {
    /// Recommends a strategy for a serialized conversation history.
    pub fn recommend(&self, history: &str, method: Method) -> Result<Recommendation<F>, RecommendError> {
        match method {
            Method::Lpd => lpd_recommend(&self.prior, &self.codec, self.lpd_mode),
            Method::Bes => Ok(bes_to_recommendation(&self.bes_outcome(history)?)),
            Method::Scorer => {
                let dist = self.score(history).map_err(RecommendError::ScorerUnavailable)?;
                let mut rec = Recommendation::from_scores(dist.probs(), &self.codec, Method::Scorer);
                rec.per_source.insert(SOURCE_SCORER.into(), dist);
                Ok(rec)
            }
            Method::HybridVote => {
                let bes = self.bes_outcome(history)?;
                let lpd = lpd_recommend(&self.prior, &self.codec, self.lpd_mode)?.chosen;
                let scored = self.try_score(history);
                let scorer_label = scored.as_ref().map(|d| self.codec.decode(d.argmax()).expect("index within codec"));
                let mut rec = hybrid_vote(bes.bm25_vote, bes.embedding_vote, lpd, scorer_label, &self.codec)?;
                rec.degraded = self.scorer.is_some() && scored.is_none();
                Ok(rec)
            }
            Method::HybridProb => {
                let bes = self.bes_outcome(history)?;
                let scored = self.try_score(history);
                let mut rec = prob_vote(scored.as_ref(), &self.prior, &bes.distribution, &self.weights, &self.codec)?;
                rec.degraded = self.scorer.is_some() && scored.is_none();
                Ok(rec)
            }
        }
    }

    pub fn bes_outcome(&self, history: &str) -> Result<BesOutcome<F>, RecommendError> {
        let tokens = normalize(history, &self.normalizer);
        Ok(bes_recommend(&self.index, self.embedder.as_ref(), &self.prior, &self.codec, &tokens, &self.bes)?)
    }

    fn score(&self, history: &str) -> Result<ProbDist<F>, ScorerError> {
        let scorer = self.scorer.as_ref().ok_or_else(|| ScorerError::Unavailable("no scorer configured".into()))?;
        let mut out = scorer.score(&[history.to_string()], &self.codec)?;
        out.pop().ok_or_else(|| ScorerError::Protocol("empty response".into()))
    }

    fn try_score(&self, history: &str) -> Option<ProbDist<F>> {
        self.scorer.as_ref()?;
        match self.score(history) {
            Ok(d) => Some(d),
            Err(e) => {
                log::warn!("scorer failed, degrading to remaining sources: {e}");
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use StrategyLabel::*;

    fn codec2() -> LabelCodec {
        LabelCodec::new(vec![AskQuestion, ProvideHint]).unwrap()
    }

    fn d(p: &[f64]) -> ProbDist<f64> {
        ProbDist::new(p.to_vec()).unwrap()
    }

    #[test]
    fn prob_vote_default_weights() {
        let rec = prob_vote(Some(&d(&[0.6, 0.4])), &d(&[0.5, 0.5]), &d(&[0.2, 0.8]), &VoteWeights::default(), &codec2()).unwrap();
        let c = &rec.per_source["combined"];
        assert!((c.get(0) - 0.46).abs() < 1e-12 && (c.get(1) - 0.54).abs() < 1e-12);
        assert_eq!(rec.chosen, ProvideHint);
        assert!(!rec.degraded);
    }

    #[test]
    fn prob_vote_boundaries_are_exact() {
        let s = d(&[0.1, 0.9]);
        let w = VoteWeights { scorer: 1.0, lpd: 0.0, bes: 0.0 };
        let rec = prob_vote(Some(&s), &d(&[0.7, 0.3]), &d(&[0.3, 0.7]), &w, &codec2()).unwrap();
        assert_eq!(rec.per_source["combined"], s);
        let same = d(&[0.1, 0.9]);
        let rec = prob_vote(Some(&same), &same, &same, &VoteWeights::default(), &codec2()).unwrap();
        assert_eq!(rec.per_source["combined"], same);
    }

    #[test]
    fn prob_vote_degrades_without_scorer() {
        let rec = prob_vote(None, &d(&[1.0, 0.0]), &d(&[0.0, 1.0]), &VoteWeights::default(), &codec2()).unwrap();
        assert!(rec.degraded);
        let c = &rec.per_source["combined"];
        assert!((c.get(0) - 0.4).abs() < 1e-12);
        assert!(!rec.per_source.contains_key(SOURCE_SCORER));
    }

    #[test]
    fn prob_vote_rejects_mismatched_lengths_and_weights() {
        let err = prob_vote(Some(&d(&[1.0])), &d(&[0.5, 0.5]), &d(&[0.5, 0.5]), &VoteWeights::default(), &codec2());
        assert!(matches!(err, Err(RecommendError::CodecMismatch(_))));
        let bad = VoteWeights { scorer: 0.5, lpd: 0.5, bes: 0.5 };
        assert!(matches!(prob_vote(None, &d(&[0.5, 0.5]), &d(&[0.5, 0.5]), &bad, &codec2()), Err(RecommendError::InvalidWeights(_))));
    }

    #[test]
    fn hybrid_vote_rules() {
        let c = LabelCodec::canonical();
        let v = |a, b, l, s| hybrid_vote::<f64>(a, b, l, s, &c).unwrap().chosen;
        assert_eq!(v(ProvideHint, ProvideHint, AskQuestion, Some(ExplainConcept)), ProvideHint);
        assert_eq!(v(ProvideHint, ProvideHint, AskQuestion, Some(AskQuestion)), AskQuestion);
        assert_eq!(v(ProvideHint, ProvideHint, ProvideHint, Some(ProvideHint)), ProvideHint);
        // No scorer: 1-1-1 falls to the lowest codec index.
        let r = hybrid_vote::<f64>(ProvideHint, AskQuestion, ProvideStrategy, None, &c).unwrap();
        assert_eq!(r.chosen, AskQuestion);
        assert!(r.degraded);
        assert_eq!(r.ranked[0].label, r.chosen);
    }

    #[test]
    fn lpd_modes() {
        let c = LabelCodec::new(vec![AskQuestion, ProvideHint, ExplainConcept]).unwrap();
        let prior = d(&[0.5, 0.25, 0.25]);
        assert_eq!(lpd_recommend(&prior, &c, LpdMode::Argmax).unwrap().chosen, AskQuestion);
        let degenerate = d(&[0.0, 1.0, 0.0]);
        for seed in 0..20 {
            let r = lpd_recommend(&degenerate, &c, LpdMode::Sample { seed }).unwrap();
            assert_eq!(r.chosen, ProvideHint);
            assert_eq!(r.ranked[0].label, r.chosen);
        }
    }

    #[test]
    fn sampler_tracks_prior() {
        let prior = d(&[0.5, 0.25, 0.25]);
        let mut s = LpdSampler::new(9);
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            counts[s.draw(&prior)] += 1;
        }
        for (c, p) in counts.iter().zip(prior.probs()) {
            assert!((*c as f64 / 10_000.0 - p).abs() < 0.02);
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert!("bert".parse::<Method>().is_err());
    }
}
