use serde::{Deserialize, Serialize};

use super::{Embedder, EmbeddingProviderConfig, EmbeddingVector};
use crate::error::{Error, ProviderError, Result};
use crate::http::{join_url, JsonClient};
use crate::tokenization::count_tokens;

/// Client for an OpenAI-style `/embeddings` endpoint.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    client: JsonClient,
    url: String,
    model: String,
    batch_size: usize,
    max_input_tokens: Option<usize>,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f32>,
}

impl RemoteEmbedder {
    pub fn new(cfg: &EmbeddingProviderConfig) -> std::result::Result<Self, ProviderError> {
        let endpoint = cfg
            .endpoint_url
            .as_deref()
            .ok_or_else(|| ProviderError::Config("remote embedder requires endpoint_url".into()))?;
        let model = cfg
            .model_name
            .clone()
            .ok_or_else(|| ProviderError::Config("remote embedder requires model_name".into()))?;
        Ok(Self {
            client: JsonClient::new(&cfg.api_key_env, cfg.retry.clone())?,
            url: join_url(endpoint, "embeddings"),
            model,
            batch_size: cfg.batch_size.max(1),
            max_input_tokens: cfg.max_input_tokens,
        })
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let resp: EmbeddingResponse = self.client.post(
            &self.url,
            &EmbeddingRequest {
                model: &self.model,
                input: texts,
            },
        )?;
        if resp.data.len() != texts.len() {
            return Err(ProviderError::Malformed(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                resp.data.len()
            ))
            .into());
        }
        let mut slots: Vec<Option<Vec<f32>>> = vec![None; texts.len()];
        for datum in resp.data {
            let slot = slots.get_mut(datum.index).ok_or_else(|| {
                ProviderError::Malformed(format!("embedding index {} out of range", datum.index))
            })?;
            if slot.replace(datum.embedding).is_some() {
                return Err(
                    ProviderError::Malformed(format!("duplicate embedding index {}", datum.index))
                        .into(),
                );
            }
        }
        Ok(slots.into_iter().map(|s| s.expect("all slots filled")).collect())
    }
}

impl Embedder for RemoteEmbedder {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(Error::InvalidParameter("embed_batch needs at least one text".into()));
        }
        if let Some(limit) = self.max_input_tokens {
            if let Some((i, n)) = texts
                .iter()
                .map(|t| count_tokens(t))
                .enumerate()
                .find(|&(_, n)| n > limit)
            {
                return Err(Error::InvalidParameter(format!(
                    "input {i} has {n} tokens, above the embedder limit of {limit}"
                )));
            }
        }
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.batch_size) {
            out.extend(self.request(batch)?);
        }
        let dim = out[0].len();
        if dim == 0 || out.iter().any(|v| v.len() != dim) {
            return Err(ProviderError::Malformed("inconsistent embedding dimensions".into()).into());
        }
        Ok(out.into_iter().map(EmbeddingVector::normalized).collect())
    }

    fn describe(&self) -> String {
        format!("remote({} @ {})", self.model, self.url)
    }
}
