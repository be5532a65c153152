//! Answer scoring and per-trial evaluation records.

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_similarity, Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::llm::{GenerationOutcome, ModelProfile, Prompt, Status};
use crate::vector_index::ChunkRef;

/// Similarity recorded for trials that overflowed the context window or hit
/// an API error.
pub const SENTINEL_SCORE: f64 = 0.5;

/// Context window utilization `U / L`, unclamped.
pub fn cwu(utilized: usize, context_length: usize) -> Result<f64> {
    if context_length == 0 {
        return Err(Error::InvalidParameter("context length must be >= 1".into()));
    }
    Ok(utilized as f64 / context_length as f64)
}

/// Cosine similarity clamped to `[0, 1]`; an empty candidate scores 0.
pub fn score_answer(candidate: &str, reference: &str, scorer: &dyn Embedder) -> Result<f64> {
    if reference.trim().is_empty() {
        return Err(Error::InvalidParameter("reference answer is empty".into()));
    }
    if candidate.trim().is_empty() {
        return Ok(0.0);
    }
    let vectors = scorer.embed_batch(&[candidate, reference])?;
    score_vectors(&vectors[0], &vectors[1])
}

pub(crate) fn score_vectors(candidate: &EmbeddingVector, reference: &EmbeddingVector) -> Result<f64> {
    Ok(cosine_similarity(candidate, reference)?.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub qa_id: String,
    pub chunk_size: usize,
    pub top_k: usize,
    /// Semantic similarity; exactly [`SENTINEL_SCORE`] unless `status` is ok.
    pub similarity: f64,
    /// Tokens in the rendered prompt.
    pub utilized_tokens: usize,
    pub context_length: usize,
    pub cwu: f64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub http_status: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub retrieved: Vec<ChunkRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

/// One (question, chunk size, k) trial's inputs.
#[derive(Debug, Clone, Copy)]
pub struct Trial<'a> {
    pub qa_id: &'a str,
    pub chunk_size: usize,
    pub top_k: usize,
    pub retrieved: &'a [ChunkRef],
    pub prompt: &'a Prompt,
    pub profile: &'a ModelProfile,
}

/// Turn a generation outcome into a record. `score` is called only for ok
/// outcomes; its failure is recorded as an api_error.
pub fn evaluate_trial<F>(trial: Trial<'_>, outcome: &GenerationOutcome, score: F) -> EvalRecord
where
    F: FnOnce(&str) -> Result<f64>,
{
    let utilized = trial.prompt.prompt_tokens;
    let context_length = trial.profile.context_length.max(1);
    let mut record = EvalRecord {
        qa_id: trial.qa_id.to_string(),
        chunk_size: trial.chunk_size,
        top_k: trial.top_k,
        similarity: SENTINEL_SCORE,
        utilized_tokens: utilized,
        context_length,
        cwu: utilized as f64 / context_length as f64,
        status: outcome.status(),
        http_status: outcome.http_status(),
        error: None,
        retrieved: trial.retrieved.to_vec(),
        answer: None,
    };
    match outcome {
        GenerationOutcome::Ok { answer } => match score(answer) {
            Ok(s) => {
                record.similarity = s.clamp(0.0, 1.0);
                record.answer = Some(answer.clone());
            }
            Err(e) => {
                record.status = Status::ApiError;
                record.http_status = match &e {
                    Error::Provider(p) => p.http_status(),
                    _ => None,
                };
                record.error = Some(format!("scoring failed: {e}"));
            }
        },
        GenerationOutcome::ContextOverflow => {
            record.error = Some("context overflow".into());
        }
        GenerationOutcome::ApiError { message, .. } => {
            record.error = Some(message.clone());
        }
    }
    record
}

/// Score `outcome` against `reference` with `scorer` and build the record.
pub fn evaluate_cell_question(
    trial: Trial<'_>,
    outcome: &GenerationOutcome,
    reference: &str,
    scorer: &dyn Embedder,
) -> EvalRecord {
    evaluate_trial(trial, outcome, |answer| score_answer(answer, reference, scorer))
}
