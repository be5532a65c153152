use std::collections::BTreeSet;

use super::{ChatModel, ModelProfile, Prompt};
use crate::chunking::split_sentences;
use crate::error::ProviderError;
use crate::tokenization::lowercase_words;

pub const NO_ANSWER: &str = "I don't know.";

/// Deterministic extractive stand-in for a chat model.
///
/// Answers with the context sentence whose lowercased word set has the highest
/// Jaccard overlap with the question's; the earliest sentence wins ties.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockExtractive;

impl MockExtractive {
    pub fn answer(prompt: &Prompt) -> String {
        let question: BTreeSet<String> = lowercase_words(&prompt.question).collect();
        let mut best: Option<(f64, &str)> = None;
        for chunk in &prompt.context_chunks {
            for (start, end) in split_sentences(chunk) {
                let sentence = &chunk[start..end];
                let words: BTreeSet<String> = lowercase_words(sentence).collect();
                let score = jaccard(&question, &words);
                if best.is_none_or(|(s, _)| score > s) {
                    best = Some((score, sentence));
                }
            }
        }
        best.map_or_else(|| NO_ANSWER.to_string(), |(_, s)| s.to_string())
    }
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

impl ChatModel for MockExtractive {
    fn complete(&self, _profile: &ModelProfile, prompt: &Prompt) -> Result<String, ProviderError> {
        Ok(Self::answer(prompt))
    }

    fn describe(&self) -> String {
        "mock-extractive".into()
    }
}
