//! Blocking JSON-over-HTTP client shared by the remote providers.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ProviderError;

/// Connection settings common to every remote provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Extra attempts after the first one, for retryable failures only.
    pub max_retries: u32,
    /// Delay before retry `n` is `backoff_ms * 2^n`.
    pub backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            backoff_ms: 500,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct JsonClient {
    inner: reqwest::blocking::Client,
    api_key: Option<String>,
    policy: RetryPolicy,
}

impl JsonClient {
    pub fn new(api_key_env: &str, policy: RetryPolicy) -> Result<Self, ProviderError> {
        let api_key = std::env::var(api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!("{api_key_env} is not set; sending requests without authorization");
        }
        let inner = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(policy.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self {
            inner,
            api_key,
            policy,
        })
    }

    /// POST `body` to `url`, retrying transport and 5xx failures.
    pub fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        url: &str,
        body: &B,
    ) -> Result<R, ProviderError> {
        let mut attempt = 0;
        loop {
            match self.post_once(url, body) {
                Err(e) if e.is_retryable() && attempt < self.policy.max_retries => {
                    let delay = self.policy.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::debug!("retrying {url} after {delay} ms: {e}");
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn post_once<B: Serialize, R: DeserializeOwned>(
        &self,
        url: &str,
        body: &B,
    ) -> Result<R, ProviderError> {
        let mut req = self.inner.post(url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .text()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| ProviderError::Malformed(format!("{e}: {}", truncate(&text)))),
            400..=499 => Err(ProviderError::Rejected {
                status,
                body: truncate(&text),
            }),
            500..=599 => Err(ProviderError::Server {
                status,
                body: truncate(&text),
            }),
            _ => Err(ProviderError::Transport(format!("unexpected HTTP {status}"))),
        }
    }
}

fn truncate(s: &str) -> String {
    const MAX: usize = 512;
    match s.char_indices().nth(MAX) {
        Some((idx, _)) => format!("{}...", &s[..idx]),
        None => s.to_string(),
    }
}

pub(crate) fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path)
}
