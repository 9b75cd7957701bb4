//! OpenAI-compatible HTTP backend (`/v1/chat/completions`, `/v1/embeddings`).

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, ChatResponse, EmbeddingVector, Embedder, FinishReason, GatewayError, Usage};

pub const API_KEY_ENV: &str = "EVOTREE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub base_url: String,
    pub chat_model: String,
    pub embed_model: String,
    /// Extra attempts after a transient failure.
    pub retry_cap: u32,
    /// First backoff delay; doubles on each retry.
    pub backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com".to_string(),
            chat_model: "gpt-4o".to_string(),
            embed_model: "text-embedding-ada-002".to_string(),
            retry_cap: 3,
            backoff_ms: 1000,
            timeout_secs: 120,
        }
    }
}

#[derive(Debug)]
struct Http {
    config: RemoteConfig,
    api_key: String,
    agent: ureq::Agent,
    attempts: AtomicU64,
}

impl Http {
    fn new(config: RemoteConfig, api_key: String) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            api_key,
            agent,
            attempts: AtomicU64::new(0),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.base_url.trim_end_matches('/'), path)
    }

    /// POST with retries on transport errors, 429 and 5xx.
    fn post(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = self.url(path);
        let max_attempts = 1 + self.config.retry_cap as u64;
        let mut last = GatewayError::Transport("no attempt made".into());
        for attempt in 1..=max_attempts {
            if attempt > 1 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 2).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            self.attempts.fetch_add(1, Ordering::Relaxed);
            let sent = self
                .agent
                .post(&url)
                .header("Authorization", &format!("Bearer {}", self.api_key))
                .send_json(body);
            let mut response = match sent {
                Ok(r) => r,
                Err(err) => {
                    log::warn!("POST {url} attempt {attempt}/{max_attempts}: {err}");
                    last = GatewayError::Transport(err.to_string());
                    continue;
                }
            };
            let status = response.status().as_u16();
            let text = response
                .body_mut()
                .read_to_string()
                .map_err(|e| GatewayError::Transport(e.to_string()));
            let text = match text {
                Ok(t) => t,
                Err(err) => {
                    last = err;
                    continue;
                }
            };
            if status == 429 || status >= 500 {
                log::warn!("POST {url} attempt {attempt}/{max_attempts}: HTTP {status}");
                last = GatewayError::Status { status, body: text };
                continue;
            }
            if status >= 400 {
                return Err(GatewayError::Status { status, body: text });
            }
            return serde_json::from_str(&text).map_err(|e| GatewayError::Decode(e.to_string()));
        }
        Err(last)
    }
}

fn api_key_from_env() -> Result<String, GatewayError> {
    std::env::var(API_KEY_ENV).map_err(|_| GatewayError::MissingApiKey(API_KEY_ENV))
}

/// Chat completions over HTTP.
#[derive(Debug, Clone)]
pub struct RemoteChat {
    http: Arc<Http>,
}

impl RemoteChat {
    pub fn new(config: RemoteConfig, api_key: impl Into<String>) -> Self {
        Self {
            http: Arc::new(Http::new(config, api_key.into())),
        }
    }

    pub fn from_env(config: RemoteConfig) -> Result<Self, GatewayError> {
        Ok(Self::new(config, api_key_from_env()?))
    }

    /// Network attempts issued so far, retries included.
    pub fn network_attempts(&self) -> u64 {
        self.http.attempts.load(Ordering::Relaxed)
    }
}

#[derive(Deserialize)]
struct WireChoice {
    #[serde(default)]
    message: Option<WireMessage>,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

#[derive(Deserialize)]
struct WireChat {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

impl ChatBackend for RemoteChat {
    fn id(&self) -> &str {
        &self.http.config.chat_model
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.check()?;
        let body = json!({
            "model": request.model_id,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let value = self.http.post("/v1/chat/completions", &body)?;
        let wire: WireChat = serde_json::from_value(value).map_err(|e| GatewayError::Decode(e.to_string()))?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::Decode("response has no choices".into()))?;
        let content = choice.message.and_then(|m| m.content).unwrap_or_default();
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Truncated,
            _ if content.is_empty() => FinishReason::Error,
            Some("stop") | None => FinishReason::Completed,
            Some(_) => FinishReason::Error,
        };
        let usage = wire.usage.unwrap_or_default();
        Ok(ChatResponse {
            content,
            finish_reason,
            usage: Usage {
                prompt_tokens: usage.prompt_tokens,
                completion_tokens: usage.completion_tokens,
            },
        })
    }

    fn fork(&self) -> Box<dyn ChatBackend> {
        Box::new(self.clone())
    }
}

/// Embeddings over HTTP. Wrap in [`super::CachedEmbedder`] to avoid
/// re-embedding identical text.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    http: Arc<Http>,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteConfig, api_key: impl Into<String>) -> Self {
        Self {
            http: Arc::new(Http::new(config, api_key.into())),
        }
    }

    pub fn from_env(config: RemoteConfig) -> Result<Self, GatewayError> {
        Ok(Self::new(config, api_key_from_env()?))
    }

    pub fn network_attempts(&self) -> u64 {
        self.http.attempts.load(Ordering::Relaxed)
    }
}

#[derive(Deserialize)]
struct WireEmbeddingData {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct WireEmbeddings {
    data: Vec<WireEmbeddingData>,
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyText);
        }
        let body = json!({ "model": self.http.config.embed_model, "input": text });
        let value = self.http.post("/v1/embeddings", &body)?;
        let wire: WireEmbeddings = serde_json::from_value(value).map_err(|e| GatewayError::Decode(e.to_string()))?;
        let data = wire
            .data
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::Decode("response has no embedding".into()))?;
        EmbeddingVector::new(data.embedding)
    }
}
