//! Prompt assembly and budget-checked answer generation.

mod mock;
mod remote;

use serde::{Deserialize, Serialize};

pub use mock::{MockExtractive, NO_ANSWER};
pub use remote::RemoteChat;

use crate::error::{Error, ProviderError, Result};
use crate::http::RetryPolicy;
use crate::tokenization::count_tokens;

/// Separator placed between retrieved chunks in the `{context}` slot.
pub const CHUNK_SEPARATOR: &str = "\n\n---\n\n";
/// Separator between the system and user parts of the rendered prompt.
pub const PART_SEPARATOR: &str = "\n\n";

pub const DEFAULT_SYSTEM_TEXT: &str = "Answer the question using only the provided context.";
pub const DEFAULT_USER_TEMPLATE: &str = "Context:\n{context}\n\nQuestion: {question}\nAnswer:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelProfile {
    pub name: String,
    /// Context window length in tokens.
    pub context_length: usize,
    pub endpoint_url: Option<String>,
    pub api_key_env: String,
    pub max_output_tokens: usize,
    pub retry: RetryPolicy,
}

impl Default for ModelProfile {
    fn default() -> Self {
        Self {
            name: "mock-extractive".into(),
            context_length: 8192,
            endpoint_url: None,
            api_key_env: crate::DEFAULT_API_KEY_ENV.into(),
            max_output_tokens: 256,
            retry: RetryPolicy::default(),
        }
    }
}

impl ModelProfile {
    pub fn validate(&self) -> Result<()> {
        if self.context_length == 0 {
            return Err(Error::InvalidParameter("context_length must be >= 1".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(Error::InvalidParameter("max_output_tokens must be >= 1".into()));
        }
        Ok(())
    }

    /// True when a prompt of `prompt_tokens` leaves no room for the reserved output.
    pub fn overflows(&self, prompt_tokens: usize) -> bool {
        prompt_tokens.saturating_add(self.max_output_tokens) > self.context_length
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplate {
    pub system: String,
    /// Must contain `{context}` and `{question}` slots.
    pub user: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            system: DEFAULT_SYSTEM_TEXT.into(),
            user: DEFAULT_USER_TEMPLATE.into(),
        }
    }
}

impl PromptTemplate {
    /// Tokens used by the template with both slots empty.
    pub fn overhead_tokens(&self) -> usize {
        assemble_prompt("", &[] as &[&str], self).prompt_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system_text: String,
    pub user_text: String,
    pub question: String,
    pub context_chunks: Vec<String>,
    /// `system_text + PART_SEPARATOR + user_text`, the text accounted as utilized.
    pub rendered: String,
    pub prompt_tokens: usize,
}

/// Substitute `{name}` slots in one pass, so slot-like text inside the
/// values is left alone. Unknown `{...}` sequences are copied verbatim.
pub(crate) fn fill_slots(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + slots.iter().map(|s| s.1.len()).sum::<usize>());
    let mut rest = template;
    'scan: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        for (name, value) in slots {
            if let Some(after) = tail.strip_prefix(name).and_then(|t| t.strip_prefix('}')) {
                out.push_str(value);
                rest = after;
                continue 'scan;
            }
        }
        out.push('{');
        rest = tail;
    }
    out.push_str(rest);
    out
}

/// Render `template` with chunks (in retrieval order) and the question.
pub fn assemble_prompt<S: AsRef<str>>(question: &str, chunks: &[S], template: &PromptTemplate) -> Prompt {
    let context = chunks
        .iter()
        .map(AsRef::as_ref)
        .collect::<Vec<_>>()
        .join(CHUNK_SEPARATOR);
    let slots = [("context", context.as_str()), ("question", question)];
    let system_text = fill_slots(&template.system, &slots);
    let user_text = fill_slots(&template.user, &slots);
    let rendered = format!("{system_text}{PART_SEPARATOR}{user_text}");
    let prompt_tokens = count_tokens(&rendered);
    Prompt {
        system_text,
        user_text,
        question: question.to_string(),
        context_chunks: chunks.iter().map(|c| c.as_ref().to_string()).collect(),
        rendered,
        prompt_tokens,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Overflow,
    ApiError,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GenerationOutcome {
    Ok { answer: String },
    ContextOverflow,
    ApiError { http_status: Option<u16>, message: String },
}

impl GenerationOutcome {
    pub fn status(&self) -> Status {
        match self {
            GenerationOutcome::Ok { .. } => Status::Ok,
            GenerationOutcome::ContextOverflow => Status::Overflow,
            GenerationOutcome::ApiError { .. } => Status::ApiError,
        }
    }

    pub fn answer(&self) -> Option<&str> {
        match self {
            GenerationOutcome::Ok { answer } => Some(answer),
            _ => None,
        }
    }

    pub fn http_status(&self) -> Option<u16> {
        match self {
            GenerationOutcome::ApiError { http_status, .. } => *http_status,
            _ => None,
        }
    }
}

pub trait ChatModel: Send + Sync {
    /// Produce an answer for `prompt`. Called only for prompts within budget.
    fn complete(&self, profile: &ModelProfile, prompt: &Prompt) -> std::result::Result<String, ProviderError>;

    fn describe(&self) -> String;
}

/// Generate an answer, refusing prompts that leave no room for the reserved
/// output tokens before any request is made.
pub fn generate(model: &dyn ChatModel, profile: &ModelProfile, prompt: &Prompt) -> GenerationOutcome {
    if profile.overflows(prompt.prompt_tokens) {
        return GenerationOutcome::ContextOverflow;
    }
    match model.complete(profile, prompt) {
        Ok(answer) if !answer.trim().is_empty() => GenerationOutcome::Ok { answer },
        Ok(_) => GenerationOutcome::ApiError {
            http_status: None,
            message: "empty completion".into(),
        },
        Err(e) => GenerationOutcome::ApiError {
            http_status: e.http_status(),
            message: e.to_string(),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ChatProviderKind {
    Remote,
    #[default]
    Mock,
}

pub fn build_chat_model(
    kind: ChatProviderKind,
    profile: &ModelProfile,
) -> std::result::Result<Box<dyn ChatModel>, ProviderError> {
    Ok(match kind {
        ChatProviderKind::Mock => Box::new(MockExtractive),
        ChatProviderKind::Remote => Box::new(RemoteChat::new(profile)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(std::result::Result<String, ProviderError>);

    impl ChatModel for Fixed {
        fn complete(&self, _: &ModelProfile, _: &Prompt) -> std::result::Result<String, ProviderError> {
            self.0.clone()
        }
        fn describe(&self) -> String {
            "fixed".into()
        }
    }

    #[test]
    fn default_template_rendering() {
        let p = assemble_prompt("Why?", &["one.", "two."], &PromptTemplate::default());
        assert_eq!(
            p.rendered,
            "Answer the question using only the provided context.\n\n\
             Context:\none.\n\n---\n\ntwo.\n\nQuestion: Why?\nAnswer:"
        );
        assert_eq!(p.prompt_tokens, count_tokens(&p.rendered));
    }

    #[test]
    fn empty_context() {
        let p = assemble_prompt("What is it?", &[] as &[&str], &PromptTemplate::default());
        assert!(p.user_text.starts_with("Context:\n\n\nQuestion:"));
        assert_eq!(p.prompt_tokens, count_tokens(&p.rendered));
    }

    #[test]
    fn chunk_tokens_are_contained() {
        let chunk = "w1 w2 w3 w4 w5 w6 w7 w8 w9 w10";
        assert_eq!(count_tokens(chunk), 10);
        let p = assemble_prompt("q", &[chunk, chunk], &PromptTemplate::default());
        assert!(p.prompt_tokens >= 20);
        let overhead = PromptTemplate::default().overhead_tokens();
        // question "q" + two chunks + one separator of three '-'.
        assert_eq!(p.prompt_tokens, overhead + 1 + 20 + 3);
    }

    #[test]
    fn slot_text_in_values_is_not_expanded() {
        let p = assemble_prompt("{context}?", &["{question}"], &PromptTemplate::default());
        assert!(p.user_text.contains("Context:\n{question}\n"));
        assert!(p.user_text.contains("Question: {context}?\n"));
    }

    #[test]
    fn overflow_at_boundary() {
        let profile = ModelProfile {
            context_length: 100,
            max_output_tokens: 1,
            ..Default::default()
        };
        assert!(profile.overflows(100));
        assert!(!profile.overflows(99));
        let mut prompt = assemble_prompt("q", &["c"], &PromptTemplate::default());
        prompt.prompt_tokens = 100;
        let model = Fixed(Ok("never".into()));
        assert_eq!(generate(&model, &profile, &prompt), GenerationOutcome::ContextOverflow);
    }

    #[test]
    fn provider_errors_become_api_error() {
        let profile = ModelProfile::default();
        let prompt = assemble_prompt("q", &["c"], &PromptTemplate::default());
        let rejected = Fixed(Err(ProviderError::Rejected {
            status: 400,
            body: "bad".into(),
        }));
        let out = generate(&rejected, &profile, &prompt);
        assert_eq!(out.status(), Status::ApiError);
        assert_eq!(out.http_status(), Some(400));
        let empty = Fixed(Ok("  ".into()));
        assert_eq!(generate(&empty, &profile, &prompt).status(), Status::ApiError);
        let ok = Fixed(Ok("fine".into()));
        assert_eq!(generate(&ok, &profile, &prompt).answer(), Some("fine"));
    }
}
