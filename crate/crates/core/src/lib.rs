//! Dialogue-tutoring copilot engine: strategy detection and classification,
//! retrieval-based recommendation, and the recommend → verify session loop.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

pub mod classify;
pub mod corpus;
pub mod features;
pub mod pipeline;
pub mod prob;
pub mod recommend;
pub mod retrieve;
pub mod scalar;
pub mod textprep;

pub use corpus::{DialogueRecord, LabelCodec, StrategyLabel};
pub use scalar::Scalar;

pub type ProbDist = prob::ProbDist<f64>;
pub type SparseVector = features::SparseVector<f64>;
pub type TextVectorizer = features::TextVectorizer<f64>;
pub type TextClassifier = classify::TextClassifier<f64>;
pub type BinaryDetector = classify::BinaryDetector<f64>;
pub type StrategyClassifier = classify::StrategyClassifier<f64>;
pub type Bm25Index = retrieve::Bm25Index<f64>;
pub type Recommendation = recommend::Recommendation<f64>;
pub type Recommender = recommend::Recommender<f64>;
pub type SessionState = pipeline::SessionState<f64>;
pub type SessionEvent = pipeline::SessionEvent<f64>;
pub type Models = pipeline::Models<f64>;
pub type Engine = pipeline::Engine<f64>;
