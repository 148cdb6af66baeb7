//! Text normalization shared by every feature extractor and index.
//!
//! Stages always run in the same order: Unicode NFC, lowercase, punctuation
//! to spaces, whitespace split, stopword removal, Porter stemming, and
//! truncation to the first `max_tokens` tokens. Each stage except NFC, split
//! and truncation can be switched off.

pub mod porter;

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

pub use porter::stem;

/// The shipped stopword list, one token per line.
pub const STOPWORDS_TXT: &str = include_str!("../../data/stopwords.txt");

/// Default sequence length limit.
pub const DEFAULT_MAX_TOKENS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NormalizerConfig {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub remove_stopwords: bool,
    pub stem: bool,
    pub max_tokens: usize,
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        Self { lowercase: true, strip_punctuation: true, remove_stopwords: true, stem: true, max_tokens: DEFAULT_MAX_TOKENS }
    }
}

impl NormalizerConfig {
    /// Every optional stage off; only splitting and truncation remain.
    pub fn raw(max_tokens: usize) -> Self {
        Self { lowercase: false, strip_punctuation: false, remove_stopwords: false, stem: false, max_tokens }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_tokens == 0 {
            return Err("max_tokens must be at least 1".into());
        }
        Ok(())
    }

    /// Stable hex digest of the configuration, recorded in bundle metadata.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS_TXT.lines().map(str::trim).filter(|l| !l.is_empty()).collect())
}

/// SHA-256 of the stopword file bytes, hex encoded.
pub fn stopword_hash() -> &'static str {
    static HASH: OnceLock<String> = OnceLock::new();
    HASH.get_or_init(|| hex::encode(Sha256::digest(STOPWORDS_TXT.as_bytes())))
}

fn punctuation() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{P}\p{S}]").expect("valid punctuation class"))
}

pub fn normalize(text: &str, config: &NormalizerConfig) -> Vec<String> {
    let mut s: String = text.nfc().collect();
    if config.lowercase {
        s = s.to_lowercase();
    }
    if config.strip_punctuation {
        s = punctuation().replace_all(&s, " ").into_owned();
    }
    let stops = stopwords();
    s.split_whitespace()
        .filter(|t| !(config.remove_stopwords && stops.contains(t)))
        .map(|t| if config.stem { stem(t) } else { t.to_string() })
        .take(config.max_tokens)
        .collect()
}
