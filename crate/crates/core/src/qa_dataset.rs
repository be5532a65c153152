//! Reference question-answer pairs: generation with a chat model and JSONL
//! storage.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chunking::Document;
use crate::error::{Error, Result};
use crate::llm::{fill_slots, generate, ChatModel, GenerationOutcome, ModelProfile, Prompt, PART_SEPARATOR};
use crate::tokenization::{count_tokens, tokenize};

pub const QA_PROMPT_VERSION: &str = "v1";
pub const QA_SYSTEM_PROMPT: &str = include_str!("../assets/qa_system_v1.txt");
pub const QA_USER_PROMPT: &str = include_str!("../assets/qa_user_v1.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionKind {
    What,
    How,
    Why,
    Other,
}

impl QuestionKind {
    /// Classify by the leading interrogative, case-insensitively.
    pub fn classify(question: &str) -> Self {
        let first: String = question
            .trim_start()
            .chars()
            .take_while(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        match first.as_str() {
            "what" => QuestionKind::What,
            "how" => QuestionKind::How,
            "why" => QuestionKind::Why,
            _ => QuestionKind::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub id: String,
    pub question: String,
    /// Reference answer.
    pub answer: String,
    pub source_docs: Vec<String>,
    pub kind: QuestionKind,
}

/// Outcome of a generation run over a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct QaGeneration {
    pub pairs: Vec<QaPair>,
    /// Response lines that were not a `{"question","answer"}` object.
    pub dropped_lines: usize,
    /// Documents cut to fit the generation prompt budget.
    pub truncated_docs: Vec<String>,
    /// Documents that produced no usable pairs, with a reason.
    pub failed_docs: Vec<(String, String)>,
}

#[derive(Deserialize)]
struct RawPair {
    question: String,
    answer: String,
}

/// Parse a JSON-lines response. Returns parsed pairs and the count of
/// dropped non-empty lines; code fences are ignored.
pub fn parse_pairs(response: &str) -> (Vec<(String, String)>, usize) {
    let mut pairs = Vec::new();
    let mut dropped = 0;
    for line in response.lines().map(str::trim) {
        if line.is_empty() || line.starts_with("```") {
            continue;
        }
        match serde_json::from_str::<RawPair>(line) {
            Ok(p) if !p.question.trim().is_empty() && !p.answer.trim().is_empty() => {
                pairs.push((p.question.trim().to_string(), p.answer.trim().to_string()))
            }
            _ => dropped += 1,
        }
    }
    (pairs, dropped)
}

fn render_generation_prompt(document: &str, n_per_doc: usize) -> Prompt {
    let n = n_per_doc.to_string();
    let slots = [("n", n.as_str()), ("document", document)];
    let system_text = fill_slots(QA_SYSTEM_PROMPT.trim_end(), &slots);
    let user_text = fill_slots(QA_USER_PROMPT.trim_end(), &slots);
    let rendered = format!("{system_text}{PART_SEPARATOR}{user_text}");
    Prompt {
        prompt_tokens: count_tokens(&rendered),
        system_text,
        user_text,
        question: String::new(),
        context_chunks: vec![document.to_string()],
        rendered,
    }
}

/// Cut `text` after its first `max_tokens` tokens.
fn truncate_tokens(text: &str, max_tokens: usize) -> &str {
    if max_tokens == 0 {
        return "";
    }
    match tokenize(text).get(max_tokens - 1) {
        Some(last) => &text[..last.end()],
        None => text,
    }
}

struct DocResult {
    pairs: Vec<QaPair>,
    dropped: usize,
    truncated: bool,
    failure: Option<String>,
}

fn generate_for_doc(model: &dyn ChatModel, profile: &ModelProfile, doc: &Document, n_per_doc: usize) -> DocResult {
    let overhead = render_generation_prompt("", n_per_doc).prompt_tokens;
    let budget = profile
        .context_length
        .saturating_sub(profile.max_output_tokens)
        .saturating_sub(overhead);
    let doc_tokens = count_tokens(&doc.text);
    let truncated = doc_tokens > budget;
    let mut result = DocResult {
        pairs: Vec::new(),
        dropped: 0,
        truncated,
        failure: None,
    };
    if budget == 0 {
        result.failure = Some("generation prompt leaves no room for the document".into());
        return result;
    }
    let text = if truncated { truncate_tokens(&doc.text, budget) } else { &doc.text };
    let prompt = render_generation_prompt(text, n_per_doc);
    let response = match generate(model, profile, &prompt) {
        GenerationOutcome::Ok { answer } => answer,
        GenerationOutcome::ContextOverflow => {
            result.failure = Some("context overflow".into());
            return result;
        }
        GenerationOutcome::ApiError { message, .. } => {
            result.failure = Some(message);
            return result;
        }
    };
    let (parsed, dropped) = parse_pairs(&response);
    result.dropped = dropped;
    result.pairs = parsed
        .into_iter()
        .take(n_per_doc)
        .enumerate()
        .map(|(i, (question, answer))| QaPair {
            id: format!("{}#{}", doc.id, i + 1),
            kind: QuestionKind::classify(&question),
            question,
            answer,
            source_docs: vec![doc.id.clone()],
        })
        .collect();
    if result.pairs.is_empty() {
        result.failure = Some("no parseable pairs in response".into());
    }
    result
}

/// Ask `model` for `n_per_doc` pairs per document. Documents run on up to
/// `parallelism` threads; output order is by (doc_id, ordinal).
pub fn generate_qa(
    model: &dyn ChatModel,
    profile: &ModelProfile,
    docs: &[Document],
    n_per_doc: usize,
    parallelism: usize,
) -> Result<QaGeneration> {
    profile.validate()?;
    if n_per_doc == 0 {
        return Ok(QaGeneration::default());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut per_doc: Vec<(&Document, DocResult)> = pool.install(|| {
        docs.par_iter()
            .map(|d| (d, generate_for_doc(model, profile, d, n_per_doc)))
            .collect()
    });
    per_doc.sort_by(|a, b| a.0.id.cmp(&b.0.id));

    let mut out = QaGeneration::default();
    for (doc, r) in per_doc {
        out.dropped_lines += r.dropped;
        if r.truncated {
            out.truncated_docs.push(doc.id.clone());
        }
        if let Some(reason) = r.failure {
            out.failed_docs.push((doc.id.clone(), reason));
        }
        out.pairs.extend(r.pairs);
    }
    Ok(out)
}

pub fn save_qa(pairs: &[QaPair], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n").map_err(|e| Error::io("writing qa file", e))?;
    }
    w.flush().map_err(|e| Error::io("writing qa file", e))
}

pub fn load_qa(path: &Path) -> Result<Vec<QaPair>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut pairs = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: QaPair = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        if pair.question.trim().is_empty() || pair.answer.trim().is_empty() {
            return Err(parse_err(lineno, "question and answer must be non-empty".into()));
        }
        if !ids.insert(pair.id.clone()) {
            return Err(parse_err(lineno, format!("duplicate id {:?}", pair.id)));
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Pairs whose `source_docs` name a document missing from `docs`.
pub fn unknown_sources<'a>(pairs: &'a [QaPair], docs: &[Document]) -> Vec<(&'a str, &'a str)> {
    let known: HashSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    pairs
        .iter()
        .flat_map(|p| p.source_docs.iter().map(move |d| (p.id.as_str(), d.as_str())))
        .filter(|(_, d)| !known.contains(d))
        .collect()
}
