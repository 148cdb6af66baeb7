//! The copilot loop over live sessions (recommend → draft → detect →
//! classify → confirm) and the batch evaluation harness.

mod engine;
mod experiment;
mod generate;
mod metrics;

pub use engine::{
    build_retrieval, load_retrieval, save_retrieval, verify_with, Engine, IndexMeta, Models, RecommenderSettings, SessionRegistry,
    CLASSIFIER_DIR, DETECTOR_DIR, INDEX_DIR,
};
pub use experiment::{run_experiment, select_threshold, DetectorReport, ExperimentConfig, ExperimentReport, Trained};
pub use generate::{GenerateRequest, GenerateResponse, Generator, GeneratorError, HttpGenerator, TemplateGenerator};
pub use metrics::{evaluate, evaluate_indices, ClassMetrics, EvalReport, MetricsError};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::ClassifyError;
use crate::corpus::StrategyLabel;
use crate::recommend::{RecommendError, Recommendation};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("session {0} not found")]
    SessionNotFound(String),
    #[error("models are not loaded")]
    ModelNotLoaded,
    #[error("session {0} has no pending recommendation")]
    NoRecommendationPending(String),
    #[error("generator unavailable: {0}")]
    GeneratorUnavailable(String),
    #[error("message is empty")]
    EmptyMessage,
    #[error("invalid event log: {0}")]
    InvalidLog(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("persistence failed: {0}")]
    Persistence(String),
    #[error(transparent)]
    Recommend(#[from] RecommendError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Student,
    Tutor,
}

impl Speaker {
    pub fn tag(self) -> &'static str {
        match self {
            Speaker::Student => "Student",
            Speaker::Tutor => "Tutor",
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

/// `"Student: ..."` / `"Tutor: ..."` lines joined by `\n`. Retrieval,
/// classifiers and UI all see exactly this string.
pub fn serialize_history(turns: &[Turn]) -> String {
    turns.iter().map(|t| format!("{}: {}", t.speaker.tag(), t.text)).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub recommended: StrategyLabel,
    pub response_text: String,
    pub detected: u8,
    pub classified: Option<StrategyLabel>,
    #[serde(rename = "match")]
    pub matched: bool,
}

impl VerificationOutcome {
    /// `classified` is dropped when nothing was detected; a match needs both
    /// a detection and the recommended label.
    pub fn new(recommended: StrategyLabel, response_text: String, detected: u8, classified: Option<StrategyLabel>) -> Self {
        let classified = if detected == 1 { classified } else { None };
        let matched = detected == 1 && classified == Some(recommended);
        Self { recommended, response_text, detected, classified, matched }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct SessionState<F> {
    pub session_id: String,
    pub created_at: u64,
    pub turns: Vec<Turn>,
    pub last_recommendation: Option<Recommendation<F>>,
    pub verifications: Vec<VerificationOutcome>,
}

impl<F: Scalar> SessionState<F> {
    pub fn new(session_id: impl Into<String>, created_at: u64) -> Self {
        Self { session_id: session_id.into(), created_at, turns: Vec::new(), last_recommendation: None, verifications: Vec::new() }
    }

    pub fn history(&self) -> String {
        serialize_history(&self.turns)
    }

    /// Timestamp for the next turn: never earlier than the last one.
    pub fn next_timestamp(&self, now: u64) -> u64 {
        self.turns.last().map_or(now.max(self.created_at), |t| now.max(t.timestamp))
    }

    pub fn apply(&mut self, event: &SessionEvent<F>) -> Result<(), PipelineError> {
        match event {
            SessionEvent::Created { .. } => return Err(PipelineError::InvalidLog("duplicate created event".into())),
            SessionEvent::Turn { turn } => {
                if self.turns.last().is_some_and(|last| turn.timestamp < last.timestamp) {
                    return Err(PipelineError::InvalidLog("turn timestamps go backwards".into()));
                }
                self.turns.push(turn.clone());
            }
            SessionEvent::Recommended { recommendation } => self.last_recommendation = Some(recommendation.clone()),
            SessionEvent::Verified { outcome } => self.verifications.push(outcome.clone()),
        }
        Ok(())
    }

    /// Rebuilds a session from its event log. An empty log is `None`.
    pub fn replay<'a, I>(events: I) -> Result<Option<Self>, PipelineError>
    where
        I: IntoIterator<Item = &'a SessionEvent<F>>,
        F: 'a,
    {
        let mut iter = events.into_iter();
        let mut state = match iter.next() {
            None => return Ok(None),
            Some(SessionEvent::Created { session_id, timestamp }) => Self::new(session_id.clone(), *timestamp),
            Some(_) => return Err(PipelineError::InvalidLog("log does not start with a created event".into())),
        };
        for e in iter {
            state.apply(e)?;
        }
        Ok(Some(state))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", bound = "F: Scalar")]
pub enum SessionEvent<F> {
    Created { session_id: String, timestamp: u64 },
    Turn { turn: Turn },
    Recommended { recommendation: Recommendation<F> },
    Verified { outcome: VerificationOutcome },
}

/// Durable destination for session events. Called with the session lock
/// held, before the in-memory state changes.
pub trait EventSink<F: Scalar>: Send + Sync {
    fn append(&self, session_id: &str, events: &[SessionEvent<F>]) -> Result<(), PipelineError>;
}
