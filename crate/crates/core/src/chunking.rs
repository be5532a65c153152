//! Sentence segmentation and greedy whole-sentence chunk packing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenization::count_tokens;

/// Byte range `[start, end)` into a document's text.
pub type Span = (usize, usize);

const TERMINATORS: [char; 3] = ['.', '!', '?'];
const CLOSERS: [char; 9] = ['"', '\'', ')', ']', '}', '\u{201D}', '\u{2019}', '\u{BB}', '>'];
const OPENERS: [char; 7] = ['"', '\'', '(', '[', '{', '\u{201C}', '\u{2018}'];

/// Words after which a '.' never ends a sentence.
pub const ABBREVIATIONS: [&str; 12] = [
    "e.g.", "i.e.", "etc.", "vs.", "Dr.", "Mr.", "Mrs.", "Ms.", "Prof.", "Fig.", "No.", "Inc.",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    /// Path relative to the corpus root, '/'-separated.
    pub id: String,
    pub text: String,
    pub sentences: Vec<Span>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let sentences = split_sentences(&text);
        Self {
            id: id.into(),
            text,
            sentences,
        }
    }

    pub fn sentence(&self, index: usize) -> &str {
        let (start, end) = self.sentences[index];
        &self.text[start..end]
    }

    pub fn sentence_texts(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().map(|&(s, e)| &self.text[s..e])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub chunk_index: usize,
    pub text: String,
    pub byte_span: Span,
    /// Inclusive sentence index range.
    pub sentence_range: (usize, usize),
    pub token_count: usize,
    /// A single sentence longer than the chunk budget, kept whole.
    pub oversized: bool,
}

fn is_abbreviation(word: &str) -> bool {
    if ABBREVIATIONS.contains(&word) {
        return true;
    }
    // "E.g." and friends at the start of a sentence.
    let mut chars = word.chars();
    if let Some(first) = chars.next() {
        if first.is_uppercase() {
            let lowered: String = first.to_lowercase().chain(chars).collect();
            if ABBREVIATIONS
                .iter()
                .any(|a| a.starts_with(|c: char| c.is_lowercase()) && *a == lowered)
            {
                return true;
            }
        }
    }
    // Initials: "J. Smith".
    let mut chars = word.chars();
    matches!(
        (chars.next(), chars.next(), chars.next()),
        (Some(c), Some('.'), None) if c.is_alphabetic()
    )
}

/// Split text into trimmed sentence spans.
///
/// A boundary falls after '.', '!' or '?' (and any closing quotes or
/// brackets right behind it) when whitespace follows, and at blank lines.
/// A '.' closing one of [`ABBREVIATIONS`] or a single-letter initial is not a
/// boundary.
pub fn split_sentences(text: &str) -> Vec<Span> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut last_end = 0usize;
    let mut word_start = 0usize;

    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            if c == '\n' && start.is_some() {
                let blank_line = chars[i + 1..]
                    .iter()
                    .take_while(|(_, c)| c.is_whitespace())
                    .any(|&(_, c)| c == '\n');
                if blank_line {
                    spans.push((start.take().unwrap(), last_end));
                }
            }
            word_start = pos + c.len_utf8();
            i += 1;
            continue;
        }

        start.get_or_insert(pos);
        last_end = pos + c.len_utf8();

        if TERMINATORS.contains(&c) {
            let mut j = i + 1;
            while j < chars.len() && CLOSERS.contains(&chars[j].1) {
                j += 1;
            }
            let followed_by_space = j < chars.len() && chars[j].1.is_whitespace();
            if followed_by_space {
                let guarded = c == '.' && {
                    let word = text[word_start..=pos].trim_start_matches(OPENERS);
                    is_abbreviation(word)
                };
                if !guarded {
                    let end = if j < chars.len() { chars[j].0 } else { text.len() };
                    spans.push((start.take().unwrap(), end));
                    last_end = end;
                    i = j;
                    continue;
                }
            }
        }
        i += 1;
    }
    if let Some(s) = start {
        spans.push((s, last_end));
    }
    spans
}

/// Greedily pack whole sentences into chunks of at most `chunk_size` tokens.
///
/// Chunks never overlap and never cross document boundaries. A sentence that
/// alone exceeds the budget becomes its own chunk, flagged `oversized`.
pub fn pack_chunks(doc: &Document, chunk_size: usize) -> Result<Vec<Chunk>> {
    if chunk_size == 0 {
        return Err(Error::InvalidParameter("chunk_size must be >= 1".into()));
    }
    // Sentence boundaries sit on whitespace, so counts add up across a run.
    let counts: Vec<usize> = doc.sentence_texts().map(count_tokens).collect();

    let mut chunks = Vec::new();
    let mut first = 0;
    while first < counts.len() {
        let mut last = first;
        let mut total = counts[first];
        while last + 1 < counts.len() && total + counts[last + 1] <= chunk_size {
            last += 1;
            total += counts[last];
        }
        let span = (doc.sentences[first].0, doc.sentences[last].1);
        chunks.push(Chunk {
            doc_id: doc.id.clone(),
            chunk_index: chunks.len(),
            text: doc.text[span.0..span.1].to_string(),
            byte_span: span,
            sentence_range: (first, last),
            token_count: total,
            oversized: total > chunk_size,
        });
        first = last + 1;
    }
    Ok(chunks)
}

/// Chunk every document of a corpus, in corpus order.
pub fn chunk_corpus(docs: &[Document], chunk_size: usize) -> Result<Vec<Chunk>> {
    let mut out = Vec::new();
    for doc in docs {
        out.extend(pack_chunks(doc, chunk_size)?);
    }
    Ok(out)
}
