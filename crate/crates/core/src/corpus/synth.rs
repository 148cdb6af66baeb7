//! Deterministic templated dialogues for desk-scale evaluation.
//!
//! Every strategy owns five response keywords (planted in tutor replies) and
//! four context cues (planted in the student's side of the history). A
//! minority of samples carry a foreign keyword or a foreign context so the
//! task is not perfectly separable.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DialogueRecord, StrategyLabel};
use crate::textprep::stem;

/// Planted vocabulary for one strategy.
#[derive(Debug, Clone, Copy)]
pub struct LabelVocabulary {
    pub label: StrategyLabel,
    pub response_words: &'static [&'static str],
    pub context_cues: &'static [&'static str],
}

const VOCAB: [LabelVocabulary; 8] = [
    LabelVocabulary {
        label: StrategyLabel::AffirmCorrectAnswer,
        response_words: &["correct", "excellent", "exactly", "perfect", "brilliant"],
        context_cues: &["answer", "equals", "result", "solved"],
    },
    LabelVocabulary {
        label: StrategyLabel::AskQuestion,
        response_words: &["wonder", "predict", "curious", "guess", "happens"],
        context_cues: &["maybe", "probably", "think", "feel"],
    },
    LabelVocabulary {
        label: StrategyLabel::ExplainConcept,
        response_words: &["concept", "definition", "principle", "represents", "describes"],
        context_cues: &["meaning", "understand", "confusing", "difference"],
    },
    LabelVocabulary {
        label: StrategyLabel::ProvideCorrection,
        response_words: &["mistake", "incorrect", "wrong", "actually", "error"],
        context_cues: &["wrote", "calculated", "multiplied", "added"],
    },
    LabelVocabulary {
        label: StrategyLabel::ProvideExample,
        response_words: &["example", "instance", "imagine", "suppose", "picture"],
        context_cues: &["abstract", "real", "concrete", "apply"],
    },
    LabelVocabulary {
        label: StrategyLabel::ProvideHint,
        response_words: &["hint", "clue", "consider", "remember", "look"],
        context_cues: &["stuck", "lost", "blank", "start"],
    },
    LabelVocabulary {
        label: StrategyLabel::ProvideSimilarProblem,
        response_words: &["similar", "another", "practice", "related", "version"],
        context_cues: &["finished", "done", "easy", "next"],
    },
    LabelVocabulary {
        label: StrategyLabel::ProvideStrategy,
        response_words: &["strategy", "approach", "steps", "method", "plan"],
        context_cues: &["overwhelmed", "complicated", "long", "organize"],
    },
];

/// Topic words shared by pedagogical and chit-chat samples.
pub const DISTRACTORS: &[&str] =
    &["fraction", "equation", "number", "problem", "lesson", "math", "today", "class", "homework", "page", "side", "value"];

pub const CHIT_CHAT: &[&str] =
    &["weather", "weekend", "movie", "lunch", "game", "music", "sunny", "tired", "fun", "dog", "pizza", "soccer"];

const FILLERS: &[&str] = &["about the", "with this", "for your", "on the", "in our", "at this"];

const STUDENT_LINES: &[&str] = &["I {c} the {d} part.", "The {d} seems {c} to me.", "So {c}, with this {d}?", "Hmm, {c} on the {d} again."];

const TUTOR_OPENERS: &[&str] = &["Let's work on the {d} today.", "Here is a new {d} for our {d2}.", "Okay, read the {d} carefully."];

const CHAT_STUDENT: &[&str] = &["I watched a {c} this {c2}.", "The {c} was great and so was {c2}.", "Ugh, {c} and {c2} all day."];

const CHAT_TUTOR: &[&str] =
    &["Hope your {c} was {c2}!", "Did you enjoy the {c} {f} {c2}?", "Sounds {c}, the {c2} {d} was nice.", "Ha, I love {c} and {c2} too."];

pub fn vocabulary(label: StrategyLabel) -> &'static LabelVocabulary {
    VOCAB.iter().find(|v| v.label == label).expect("every label has a vocabulary")
}

/// Porter stems of the label's planted response keywords.
pub fn planted_stems(label: StrategyLabel) -> Vec<String> {
    vocabulary(label).response_words.iter().map(|w| stem(w)).collect()
}

/// Porter stems of the label's context cues.
pub fn context_stems(label: StrategyLabel) -> Vec<String> {
    vocabulary(label).context_cues.iter().map(|w| stem(w)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub per_label: BTreeMap<StrategyLabel, usize>,
    pub negatives: usize,
    pub seed: u64,
    /// Probability that a positive reply also carries a foreign keyword.
    pub response_noise: f64,
    /// Probability that a positive history uses another label's cues.
    pub context_noise: f64,
}

impl SynthSpec {
    pub fn uniform(per_label: usize, negatives: usize, seed: u64) -> Self {
        Self {
            per_label: StrategyLabel::ALL.iter().map(|l| (*l, per_label)).collect(),
            negatives,
            seed,
            response_noise: 0.1,
            context_noise: 0.15,
        }
    }

    pub fn total(&self) -> usize {
        self.per_label.values().sum::<usize>() + self.negatives
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items.choose(rng).expect("non-empty word list")
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in slots {
        out = out.replace(k, v);
    }
    out
}

fn other_label(rng: &mut ChaCha8Rng, not: StrategyLabel) -> StrategyLabel {
    loop {
        let l = *StrategyLabel::ALL.choose(rng).unwrap();
        if l != not {
            return l;
        }
    }
}

fn pedagogical_history(rng: &mut ChaCha8Rng, context: StrategyLabel) -> String {
    let cues = vocabulary(context).context_cues;
    let mut lines = Vec::new();
    let opener = fill(pick(rng, TUTOR_OPENERS), &[("{d2}", pick(rng, DISTRACTORS)), ("{d}", pick(rng, DISTRACTORS))]);
    lines.push(format!("Tutor: {opener}"));
    let student_turns = rng.gen_range(1..=2);
    for i in 0..student_turns {
        if i > 0 {
            lines.push(format!("Tutor: Okay, tell me more {} {}.", pick(rng, FILLERS), pick(rng, DISTRACTORS)));
        }
        let line = fill(pick(rng, STUDENT_LINES), &[("{c}", pick(rng, cues)), ("{d}", pick(rng, DISTRACTORS))]);
        lines.push(format!("Student: {}", capitalize(&line)));
    }
    lines.join("\n")
}

fn pedagogical_response(rng: &mut ChaCha8Rng, label: StrategyLabel, noise: f64) -> String {
    let words = vocabulary(label).response_words;
    let chosen: Vec<&str> = words.choose_multiple(rng, 2).copied().collect();
    let mut parts = vec![
        capitalize(chosen[0]),
        pick(rng, FILLERS).to_string(),
        format!("{},", pick(rng, DISTRACTORS)),
        pick(rng, FILLERS).to_string(),
        chosen[1].to_string(),
    ];
    if rng.gen_bool(noise) {
        let foreign = other_label(rng, label);
        parts.push(pick(rng, vocabulary(foreign).response_words).to_string());
    }
    parts.push(pick(rng, FILLERS).to_string());
    parts.push(pick(rng, DISTRACTORS).to_string());
    let end = if label == StrategyLabel::AskQuestion { "?" } else { "." };
    format!("{}{end}", parts.join(" "))
}

fn chit_chat_history(rng: &mut ChaCha8Rng) -> String {
    let turns = rng.gen_range(1..=2);
    let mut lines = Vec::new();
    for _ in 0..turns {
        let c = pick(rng, CHIT_CHAT);
        let c2 = pick(rng, CHIT_CHAT);
        lines.push(format!("Student: {}", fill(pick(rng, CHAT_STUDENT), &[("{c2}", c2), ("{c}", c)])));
    }
    lines.join("\n")
}

fn chit_chat_response(rng: &mut ChaCha8Rng) -> String {
    let c = pick(rng, CHIT_CHAT);
    let c2 = pick(rng, CHIT_CHAT);
    let slots = [("{c2}", c2), ("{c}", c), ("{f}", pick(rng, FILLERS)), ("{d}", pick(rng, DISTRACTORS))];
    fill(pick(rng, CHAT_TUTOR), &slots)
}

/// Generates labeled dialogues in canonical label order followed by the
/// chit-chat negatives. Equal specs produce identical output.
pub fn synth_corpus(spec: &SynthSpec) -> Vec<DialogueRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.total());
    for (&label, &count) in &spec.per_label {
        for _ in 0..count {
            let context = if rng.gen_bool(spec.context_noise) { other_label(&mut rng, label) } else { label };
            let history = pedagogical_history(&mut rng, context);
            let response = pedagogical_response(&mut rng, label, spec.response_noise);
            out.push(DialogueRecord::labeled(history, response, label));
        }
    }
    for _ in 0..spec.negatives {
        let history = chit_chat_history(&mut rng);
        out.push(DialogueRecord::negative(history, chit_chat_response(&mut rng)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{write_records, RecordFormat};
    use crate::textprep::{normalize, NormalizerConfig};
    use std::collections::HashSet;

    #[test]
    fn byte_identical_across_runs() {
        let mut spec = SynthSpec::uniform(0, 0, 7);
        spec.per_label.insert(StrategyLabel::AskQuestion, 2);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_records(&mut a, &synth_corpus(&spec), RecordFormat::Jsonl).unwrap();
        write_records(&mut b, &synth_corpus(&spec), RecordFormat::Jsonl).unwrap();
        assert_eq!(a, b);
        assert_eq!(synth_corpus(&spec).len(), 2);
    }

    #[test]
    fn responses_carry_planted_stems() {
        let records = synth_corpus(&SynthSpec::uniform(20, 20, 3));
        let cfg = NormalizerConfig::default();
        for r in &records {
            let toks: HashSet<String> = normalize(&r.tutor_response, &cfg).into_iter().collect();
            match r.strategy {
                Some(l) => assert!(planted_stems(l).iter().any(|s| toks.contains(s)), "{}", r.tutor_response),
                None => {
                    for l in StrategyLabel::ALL {
                        assert!(planted_stems(l).iter().all(|s| !toks.contains(s)), "{}", r.tutor_response);
                    }
                }
            }
        }
    }

    #[test]
    fn exact_counts() {
        let records = synth_corpus(&SynthSpec::uniform(150, 0, 42));
        assert_eq!(records.len(), 1200);
        for l in StrategyLabel::ALL {
            assert_eq!(records.iter().filter(|r| r.strategy == Some(l)).count(), 150);
        }
    }

    #[test]
    fn planted_vocabulary_is_label_specific() {
        let mut seen = HashSet::new();
        let stops = crate::textprep::stopwords();
        for l in StrategyLabel::ALL {
            for s in planted_stems(l).into_iter().chain(context_stems(l)) {
                assert!(seen.insert(s.clone()), "stem {s} shared between labels");
            }
            for w in vocabulary(l).response_words.iter().chain(vocabulary(l).context_cues) {
                assert!(!stops.contains(w), "{w} is a stopword");
            }
        }
        for w in DISTRACTORS.iter().chain(CHIT_CHAT) {
            assert!(!seen.contains(&stem(w)), "{w} collides with planted vocabulary");
        }
    }
}
