//! Dataset schema, ingestion, cleaning, label encoding and splitting.

mod io;
pub mod synth;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prob::ProbDist;
use crate::scalar::Scalar;

pub use io::{load_records, parse_records, save_records, write_records, RecordFormat};
pub use synth::{synth_corpus, SynthSpec};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("unknown strategy label {label:?}{}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    UnknownLabel { row: Option<usize>, label: String },
    #[error("missing required column {0:?}")]
    MissingColumn(String),
    #[error("no records to split")]
    EmptyInput,
    #[error("invalid split ratios: {0}")]
    BadRatios(String),
    #[error("no labeled records")]
    NoLabels,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The eight pedagogical strategies, in canonical (alphabetical) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyLabel {
    AffirmCorrectAnswer,
    AskQuestion,
    ExplainConcept,
    ProvideCorrection,
    ProvideExample,
    ProvideHint,
    ProvideSimilarProblem,
    ProvideStrategy,
}

impl StrategyLabel {
    pub const ALL: [StrategyLabel; 8] = [
        StrategyLabel::AffirmCorrectAnswer,
        StrategyLabel::AskQuestion,
        StrategyLabel::ExplainConcept,
        StrategyLabel::ProvideCorrection,
        StrategyLabel::ProvideExample,
        StrategyLabel::ProvideHint,
        StrategyLabel::ProvideSimilarProblem,
        StrategyLabel::ProvideStrategy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyLabel::AffirmCorrectAnswer => "affirm_correct_answer",
            StrategyLabel::AskQuestion => "ask_question",
            StrategyLabel::ExplainConcept => "explain_concept",
            StrategyLabel::ProvideCorrection => "provide_correction",
            StrategyLabel::ProvideExample => "provide_example",
            StrategyLabel::ProvideHint => "provide_hint",
            StrategyLabel::ProvideSimilarProblem => "provide_similar_problem",
            StrategyLabel::ProvideStrategy => "provide_strategy",
        }
    }
}

impl fmt::Display for StrategyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyLabel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| CorpusError::UnknownLabel { row: None, label: s.to_string() })
    }
}

/// One annotated sample.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub conversation_history: String,
    #[serde(default)]
    pub tutor_response: String,
    #[serde(default)]
    pub strategy: Option<StrategyLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary_label: Option<u8>,
}

impl DialogueRecord {
    pub fn labeled(history: impl Into<String>, response: impl Into<String>, strategy: StrategyLabel) -> Self {
        Self { conversation_history: history.into(), tutor_response: response.into(), strategy: Some(strategy), binary_label: Some(1) }
    }

    pub fn negative(history: impl Into<String>, response: impl Into<String>) -> Self {
        Self { conversation_history: history.into(), tutor_response: response.into(), strategy: None, binary_label: Some(0) }
    }

    /// Fills a missing binary label from the strategy and checks the record
    /// invariants.
    pub(crate) fn finish(mut self) -> Result<Self, String> {
        if self.binary_label.is_none() && self.strategy.is_some() {
            self.binary_label = Some(1);
        }
        match (self.strategy, self.binary_label) {
            (_, Some(b)) if b > 1 => return Err(format!("binary_label must be 0 or 1, got {b}")),
            (Some(s), Some(0)) => return Err(format!("binary_label 0 contradicts strategy {s}")),
            _ => {}
        }
        if self.binary_label.is_some() && self.tutor_response.trim().is_empty() {
            return Err("tutor_response is empty on a labeled record".into());
        }
        Ok(self)
    }
}

/// Bijection between strategy labels and contiguous class indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<StrategyLabel>", into = "Vec<StrategyLabel>")]
pub struct LabelCodec {
    index_to_label: Vec<StrategyLabel>,
    label_to_index: HashMap<StrategyLabel, usize>,
}

impl LabelCodec {
    /// All eight labels in canonical order.
    pub fn canonical() -> Self {
        Self::new(StrategyLabel::ALL.to_vec()).expect("canonical labels are distinct")
    }

    pub fn new(labels: Vec<StrategyLabel>) -> Result<Self, String> {
        if labels.is_empty() {
            return Err("codec needs at least one label".into());
        }
        let mut label_to_index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if label_to_index.insert(*l, i).is_some() {
                return Err(format!("duplicate label {l}"));
            }
        }
        Ok(Self { index_to_label: labels, label_to_index })
    }

    /// Codec over the labels that occur in `records`, in canonical order.
    pub fn fit(records: &[DialogueRecord]) -> Result<Self, CorpusError> {
        let present: std::collections::BTreeSet<StrategyLabel> = records.iter().filter_map(|r| r.strategy).collect();
        if present.is_empty() {
            return Err(CorpusError::NoLabels);
        }
        Ok(Self::new(present.into_iter().collect()).expect("set has no duplicates"))
    }

    pub fn len(&self) -> usize {
        self.index_to_label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_to_label.is_empty()
    }

    pub fn encode(&self, label: StrategyLabel) -> Option<usize> {
        self.label_to_index.get(&label).copied()
    }

    pub fn decode(&self, index: usize) -> Option<StrategyLabel> {
        self.index_to_label.get(index).copied()
    }

    pub fn labels(&self) -> &[StrategyLabel] {
        &self.index_to_label
    }

    pub fn names(&self) -> Vec<String> {
        self.index_to_label.iter().map(|l| l.as_str().to_string()).collect()
    }

    /// SHA-256 over the newline-joined label names.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.names().join("\n").as_bytes()))
    }
}

impl TryFrom<Vec<StrategyLabel>> for LabelCodec {
    type Error = String;

    fn try_from(labels: Vec<StrategyLabel>) -> Result<Self, Self::Error> {
        Self::new(labels)
    }
}

impl From<LabelCodec> for Vec<StrategyLabel> {
    fn from(c: LabelCodec) -> Self {
        c.index_to_label
    }
}

/// Label-conflicting duplicates found by [`dedupe_with_conflicts`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelConflict {
    pub kept: usize,
    pub dropped: usize,
}

/// Removes duplicates keyed by trimmed `(history, response)`; the first
/// occurrence wins.
pub fn dedupe(records: Vec<DialogueRecord>) -> Vec<DialogueRecord> {
    dedupe_with_conflicts(records).0
}

pub fn dedupe_with_conflicts(records: Vec<DialogueRecord>) -> (Vec<DialogueRecord>, Vec<LabelConflict>) {
    let mut first_seen: HashMap<(String, String), usize> = HashMap::new();
    let mut kept = Vec::with_capacity(records.len());
    let mut conflicts = Vec::new();
    for (i, r) in records.into_iter().enumerate() {
        let key = (r.conversation_history.trim().to_string(), r.tutor_response.trim().to_string());
        match first_seen.get(&key) {
            Some(&k) => {
                let winner: &DialogueRecord = &kept[k];
                if winner.strategy != r.strategy || winner.binary_label != r.binary_label {
                    log::warn!(
                        "duplicate text with conflicting labels (row {i}: {:?} vs kept {:?}); keeping first",
                        r.strategy,
                        winner.strategy
                    );
                    conflicts.push(LabelConflict { kept: k, dropped: i });
                }
            }
            None => {
                first_seen.insert(key, kept.len());
                kept.push(r);
            }
        }
    }
    (kept, conflicts)
}

/// Drops records whose strategy label occurs fewer than `min_count` times.
pub fn filter_rare_labels(records: Vec<DialogueRecord>, min_count: usize) -> Vec<DialogueRecord> {
    let mut counts: HashMap<StrategyLabel, usize> = HashMap::new();
    for l in records.iter().filter_map(|r| r.strategy) {
        *counts.entry(l).or_default() += 1;
    }
    records.into_iter().filter(|r| r.strategy.is_none_or(|l| counts[&l] >= min_count)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.7, validation: 0.1, test: 0.2 }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Self {
        Self { train, validation, test }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(CorpusError::BadRatios("every ratio must be positive".into()));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::BadRatios(format!("ratios sum to {sum}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<DialogueRecord>,
    pub validation: Vec<DialogueRecord>,
    pub test: Vec<DialogueRecord>,
    pub seed: u64,
}

/// Seeded, stratified split. Each `(strategy, binary_label)` group is
/// shuffled and sliced so validation and test get the floor of their share;
/// remainders go to train.
pub fn split(records: &[DialogueRecord], ratios: SplitRatios, seed: u64) -> Result<DatasetSplit, CorpusError> {
    ratios.validate()?;
    if records.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let mut groups: BTreeMap<(Option<StrategyLabel>, Option<u8>), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry((r.strategy, r.binary_label)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for idx in groups.values_mut() {
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        // A small epsilon keeps exact products like 10 * 0.2 from flooring down.
        let held_out = ((n * (ratios.validation + ratios.test)) + 1e-9).floor() as usize;
        let n_test = ((n * ratios.test) + 1e-9).floor() as usize;
        let n_val = held_out - n_test;
        test.extend_from_slice(&idx[..n_test]);
        val.extend_from_slice(&idx[n_test..n_test + n_val]);
        train.extend_from_slice(&idx[n_test + n_val..]);
    }
    for part in [&mut train, &mut val, &mut test] {
        part.shuffle(&mut rng);
    }
    if train.is_empty() {
        return Err(CorpusError::BadRatios("train partition is empty".into()));
    }
    let take = |ids: &[usize]| ids.iter().map(|&i| records[i].clone()).collect();
    Ok(DatasetSplit { train: take(&train), validation: take(&val), test: take(&test), seed })
}

/// Label frequencies over `codec`, as exact count / total.
pub fn label_prior<F: Scalar>(records: &[DialogueRecord], codec: &LabelCodec) -> Result<ProbDist<F>, CorpusError> {
    let mut counts = vec![0usize; codec.len()];
    for l in records.iter().filter_map(|r| r.strategy) {
        let i = codec.encode(l).ok_or_else(|| CorpusError::UnknownLabel { row: None, label: l.to_string() })?;
        counts[i] += 1;
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(CorpusError::NoLabels);
    }
    let total_f = F::of_usize(total);
    let probs = counts.iter().map(|c| F::of_usize(*c) / total_f).collect();
    Ok(ProbDist::new(probs).expect("frequencies form a distribution"))
}

/// Distinct labels present, for diagnostics.
pub fn label_counts(records: &[DialogueRecord]) -> BTreeMap<StrategyLabel, usize> {
    let mut counts = BTreeMap::new();
    for l in records.iter().filter_map(|r| r.strategy) {
        *counts.entry(l).or_default() += 1;
    }
    counts
}
