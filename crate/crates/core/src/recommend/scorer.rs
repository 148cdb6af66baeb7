//! External probabilistic scorer: wire types, a keyword mock and an HTTP
//! client.
//!
//! Protocol: `POST {base}/score` with `{"texts": [...], "codec": [...]}`,
//! answered by `{"probs": [[...], ...]}`, one row per text in codec order.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::synth::{context_stems, planted_stems};
use crate::corpus::LabelCodec;
use crate::prob::ProbDist;
use crate::scalar::Scalar;
use crate::textprep::{normalize, NormalizerConfig};

/// Rows whose sum is off by more than this are rejected rather than rescaled.
pub const RENORMALIZE_SLACK: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("scorer timed out")]
    Timeout,
    #[error("scorer protocol error: {0}")]
    Protocol(String),
    #[error("codec mismatch: {0}")]
    CodecMismatch(String),
    #[error("row {index}: invalid distribution ({reason})")]
    InvalidDistribution { index: usize, reason: String },
    #[error("scorer unreachable: {0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub texts: Vec<String>,
    pub codec: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub probs: Vec<Vec<f64>>,
}

/// Anything that maps texts to distributions over a codec.
pub trait Scorer<F: Scalar>: Send + Sync {
    fn score(&self, texts: &[String], codec: &LabelCodec) -> Result<Vec<ProbDist<F>>, ScorerError>;
}

/// Validates a raw response against the request: one row per text, one
/// column per label, each row a distribution (renormalized if within slack).
pub fn validate_response<F: Scalar>(resp: ScoreResponse, n_texts: usize, codec: &LabelCodec) -> Result<Vec<ProbDist<F>>, ScorerError> {
    if resp.probs.len() != n_texts {
        return Err(ScorerError::Protocol(format!("{} rows for {n_texts} texts", resp.probs.len())));
    }
    resp.probs
        .into_iter()
        .enumerate()
        .map(|(index, row)| {
            if row.len() != codec.len() {
                return Err(ScorerError::CodecMismatch(format!("row {index} has {} entries, codec {}", row.len(), codec.len())));
            }
            let row: Vec<F> = row.into_iter().map(F::of).collect();
            ProbDist::renormalized(row, F::of(RENORMALIZE_SLACK))
                .map_err(|e| ScorerError::InvalidDistribution { index, reason: e.to_string() })
        })
        .collect()
}

/// Deterministic keyword scorer. Each label's weight is `smoothing` plus the
/// number of text tokens among the label's context and planted stems; text
/// with no tokens scores uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct MockScorer {
    pub smoothing: f64,
    pub normalizer: NormalizerConfig,
}

impl Default for MockScorer {
    fn default() -> Self {
        Self { smoothing: 0.25, normalizer: NormalizerConfig::default() }
    }
}

impl MockScorer {
    pub fn score_one(&self, text: &str, codec: &LabelCodec) -> Vec<f64> {
        let tokens = normalize(text, &self.normalizer);
        let k = codec.len();
        if tokens.is_empty() {
            return vec![1.0 / k as f64; k];
        }
        let weights: Vec<f64> = codec
            .labels()
            .iter()
            .map(|l| {
                let keys: Vec<String> = context_stems(*l).into_iter().chain(planted_stems(*l)).collect();
                self.smoothing + tokens.iter().filter(|t| keys.contains(t)).count() as f64
            })
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter().map(|w| w / total).collect()
    }

    /// Serves one protocol request.
    pub fn respond(&self, req: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let labels =
            req.codec.iter().map(|s| s.parse()).collect::<Result<Vec<_>, _>>().map_err(|e| ScorerError::CodecMismatch(format!("{e}")))?;
        let codec = LabelCodec::new(labels).map_err(ScorerError::CodecMismatch)?;
        Ok(ScoreResponse { probs: req.texts.iter().map(|t| self.score_one(t, &codec)).collect() })
    }
}

impl<F: Scalar> Scorer<F> for MockScorer {
    fn score(&self, texts: &[String], codec: &LabelCodec) -> Result<Vec<ProbDist<F>>, ScorerError> {
        let resp = ScoreResponse { probs: texts.iter().map(|t| self.score_one(t, codec)).collect() };
        validate_response(resp, texts.len(), codec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerEndpoint {
    pub base_url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Fingerprint of the codec the scorer was built for, if known.
    #[serde(default)]
    pub codec_fingerprint: Option<String>,
}

fn default_timeout_ms() -> u64 {
    2000
}

/// Blocking HTTP client for the protocol. Must not be used from inside an
/// async runtime thread.
pub struct HttpScorer {
    endpoint: ScorerEndpoint,
    client: reqwest::blocking::Client,
}

impl HttpScorer {
    pub fn new(endpoint: ScorerEndpoint) -> Result<Self, ScorerError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(endpoint.timeout_ms))
            .build()
            .map_err(|e| ScorerError::Unavailable(e.to_string()))?;
        Ok(Self { endpoint, client })
    }

    pub fn endpoint(&self) -> &ScorerEndpoint {
        &self.endpoint
    }
}

impl<F: Scalar> Scorer<F> for HttpScorer {
    fn score(&self, texts: &[String], codec: &LabelCodec) -> Result<Vec<ProbDist<F>>, ScorerError> {
        query_scorer(self, texts, codec)
    }
}

/// One request/response exchange. Fails fast on a codec fingerprint mismatch.
pub fn query_scorer<F: Scalar>(scorer: &HttpScorer, texts: &[String], codec: &LabelCodec) -> Result<Vec<ProbDist<F>>, ScorerError> {
    if let Some(fp) = &scorer.endpoint.codec_fingerprint {
        if *fp != codec.fingerprint() {
            return Err(ScorerError::CodecMismatch(format!("endpoint expects codec {fp}, engine has {}", codec.fingerprint())));
        }
    }
    let url = format!("{}/score", scorer.endpoint.base_url.trim_end_matches('/'));
    let body = ScoreRequest { texts: texts.to_vec(), codec: codec.names() };
    let resp = scorer.client.post(&url).json(&body).send().map_err(|e| {
        if e.is_timeout() {
            ScorerError::Timeout
        } else if e.is_connect() {
            ScorerError::Unavailable(e.to_string())
        } else {
            ScorerError::Protocol(e.to_string())
        }
    })?;
    if !resp.status().is_success() {
        return Err(ScorerError::Protocol(format!("status {}", resp.status())));
    }
    let parsed: ScoreResponse =
        resp.json().map_err(
            |e| {
                if e.is_timeout() {
                    ScorerError::Timeout
                } else {
                    ScorerError::Protocol(format!("malformed body: {e}"))
                }
            },
        )?;
    validate_response(parsed, texts.len(), codec)
}
