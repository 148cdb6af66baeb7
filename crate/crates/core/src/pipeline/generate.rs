//! Tutor-response drafting: a fixed template bank, or a remote generator
//! speaking `POST /generate {history, strategy} -> {response}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::StrategyLabel;
use crate::features::fnv1a64;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("generator unavailable: {0}")]
    Unavailable(String),
}

pub trait Generator: Send + Sync {
    fn generate(&self, history: &str, strategy: StrategyLabel) -> Result<String, GeneratorError>;
}

/// Three templates per strategy, picked by `fnv1a64(history) % 3`. Each
/// template carries that strategy's keywords only.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateGenerator;

impl TemplateGenerator {
    pub fn templates(strategy: StrategyLabel) -> [&'static str; 3] {
        use StrategyLabel::*;
        match strategy {
            AffirmCorrectAnswer => [
                "Excellent, that is exactly correct!",
                "Perfect work, your result is correct.",
                "Brilliant, that is exactly the right answer.",
            ],
            AskQuestion => [
                "What do you predict happens if we change the numbers?",
                "I wonder, can you guess what comes after this?",
                "Are you curious what happens when we flip it around?",
            ],
            ExplainConcept => [
                "The concept here is that a fraction represents part of a whole.",
                "By definition, this principle describes how the quantities connect.",
                "Here is the principle: the symbol represents an unknown value, by definition.",
            ],
            ProvideCorrection => [
                "Actually, there is a small mistake in that line.",
                "That is incorrect; the error is in the sign.",
                "Careful, that is wrong, actually the mistake is earlier.",
            ],
            ProvideExample => [
                "For example, imagine sharing a pizza among four friends.",
                "Suppose we picture ten apples in a basket, for instance.",
                "Here is an example: imagine a train moving at constant speed.",
            ],
            ProvideHint => [
                "Here is a hint: look at the last digit.",
                "Consider this clue: remember how the signs combine.",
                "Remember the formula, and look at the units as a hint.",
            ],
            ProvideSimilarProblem => [
                "Let us practice a similar problem with different numbers.",
                "Try another version of this, a related one.",
                "Here is a similar practice question for you.",
            ],
            ProvideStrategy => [
                "Let us plan the steps: first list what we know.",
                "A good strategy is to work backwards with this method.",
                "Use this approach: break the problem into small steps.",
            ],
        }
    }
}

impl Generator for TemplateGenerator {
    fn generate(&self, history: &str, strategy: StrategyLabel) -> Result<String, GeneratorError> {
        let i = (fnv1a64(history.as_bytes()) % 3) as usize;
        Ok(Self::templates(strategy)[i].to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub history: String,
    pub strategy: StrategyLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub response: String,
}

/// Blocking client; keep it off async runtime threads.
pub struct HttpGenerator {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpGenerator {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Result<Self, GeneratorError> {
        let client =
            reqwest::blocking::Client::builder().timeout(timeout).build().map_err(|e| GeneratorError::Unavailable(e.to_string()))?;
        Ok(Self { base_url: base_url.into(), client })
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, history: &str, strategy: StrategyLabel) -> Result<String, GeneratorError> {
        let url = format!("{}/generate", self.base_url.trim_end_matches('/'));
        let body = GenerateRequest { history: history.to_string(), strategy };
        let resp = self.client.post(&url).json(&body).send().map_err(|e| GeneratorError::Unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(GeneratorError::Unavailable(format!("status {}", resp.status())));
        }
        let parsed: GenerateResponse = resp.json().map_err(|e| GeneratorError::Unavailable(format!("malformed body: {e}")))?;
        Ok(parsed.response)
    }
}
