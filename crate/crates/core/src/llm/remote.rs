use serde::{Deserialize, Serialize};

use super::{ChatModel, ModelProfile, Prompt};
use crate::error::ProviderError;
use crate::http::{join_url, JsonClient};

/// OpenAI-compatible `/chat/completions` client. Temperature is pinned to 0.
#[derive(Debug, Clone)]
pub struct RemoteChat {
    client: JsonClient,
    url: String,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 2],
    max_tokens: usize,
    temperature: f32,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

impl RemoteChat {
    pub fn new(profile: &ModelProfile) -> Result<Self, ProviderError> {
        let endpoint = profile
            .endpoint_url
            .as_deref()
            .ok_or_else(|| ProviderError::Config("remote chat model requires endpoint_url".into()))?;
        Ok(Self {
            client: JsonClient::new(&profile.api_key_env, profile.retry.clone())?,
            url: join_url(endpoint, "chat/completions"),
        })
    }
}

impl ChatModel for RemoteChat {
    fn complete(&self, profile: &ModelProfile, prompt: &Prompt) -> Result<String, ProviderError> {
        let body = ChatRequest {
            model: &profile.name,
            messages: [
                Message {
                    role: "system",
                    content: &prompt.system_text,
                },
                Message {
                    role: "user",
                    content: &prompt.user_text,
                },
            ],
            max_tokens: profile.max_output_tokens,
            temperature: 0.0,
        };
        let resp: ChatResponse = self.client.post(&self.url, &body)?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Malformed("no choices[0].message.content".into()))
    }

    fn describe(&self) -> String {
        format!("remote-chat({})", self.url)
    }
}
