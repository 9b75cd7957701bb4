//! Chat-completion and embedding backends.
//!
//! Three implementations sit behind the [`ChatBackend`] and [`Embedder`]
//! traits: an OpenAI-compatible HTTP client ([`remote`]), a JSONL-scripted
//! replay backend ([`scripted`]) and a hashing embedder ([`embed`]) that
//! needs no network.

pub mod embed;
pub mod remote;
pub mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{AgentRole, ReasonMode, StrategyKind, Task};

pub use embed::{CachedEmbedder, HashEmbedder, HASH_EMBED_DIM};
pub use remote::{RemoteChat, RemoteConfig, RemoteEmbedder, API_KEY_ENV};
pub use scripted::{ScriptEntry, ScriptMatch, ScriptedBackend};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("could not decode backend response: {0}")]
    Decode(String),
    #[error("script exhausted: no entry matches {0}")]
    ScriptExhausted(String),
    #[error("script line {line}: {message}")]
    ScriptFormat { line: usize, message: String },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("response still truncated after {attempts} attempts")]
    Truncated { attempts: usize },
    #[error("environment variable {0} is not set")]
    MissingApiKey(&'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: MessageRole,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: MessageRole::User,
            content: content.into(),
        }
    }
}

/// Who is calling and why. Not sent over the wire; the scripted backend
/// matches on it and the transcript records it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallTag {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<AgentRole>,
    /// 1-based attempt index within a training loop.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<ReasonMode>,
}

impl std::fmt::Display for CallTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", serde_json::to_string(self).unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub tag: CallTag,
}

impl ChatRequest {
    pub fn new(messages: Vec<Message>, model_id: impl Into<String>) -> Self {
        Self {
            messages,
            model_id: model_id.into(),
            temperature: 0.0,
            max_tokens: 2048,
            tag: CallTag::default(),
        }
    }

    pub fn with_tag(mut self, tag: CallTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!("temperature {}", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    #[default]
    Completed,
    Truncated,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    #[serde(default)]
    pub usage: Usage,
}

impl ChatResponse {
    pub fn completed(content: impl Into<String>) -> Self {
        let content = content.into();
        let finish_reason = if content.is_empty() {
            FinishReason::Error
        } else {
            FinishReason::Completed
        };
        Self {
            content,
            finish_reason,
            usage: Usage::default(),
        }
    }
}

pub trait ChatBackend: Send + Sync {
    /// Identifier used as the backend column in reports.
    fn id(&self) -> &str;

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;

    /// An independent handle for a concurrent worker.
    fn fork(&self) -> Box<dyn ChatBackend>;
}

/// A fixed-length, finite embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, GatewayError> {
        if values.is_empty() {
            return Err(GatewayError::InvalidRequest("embedding has zero dimensions".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GatewayError::InvalidRequest("embedding has non-finite values".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError>;
}

/// True iff the response was cut off or lacks `expected_marker`.
pub fn detect_truncation(response: &ChatResponse, expected_marker: &str) -> bool {
    response.finish_reason == FinishReason::Truncated || !response.content.contains(expected_marker)
}

/// Issue `request`, re-issuing it up to `extra_attempts` more times while the
/// response looks truncated.
pub fn complete_checked(
    backend: &dyn ChatBackend,
    request: &ChatRequest,
    expected_marker: &str,
    extra_attempts: usize,
) -> Result<ChatResponse, GatewayError> {
    let attempts = 1 + extra_attempts;
    for n in 1..=attempts {
        let response = backend.complete(request)?;
        if !detect_truncation(&response, expected_marker) {
            return Ok(response);
        }
        log::debug!("truncated response ({n}/{attempts}) for {}", request.tag);
    }
    Err(GatewayError::Truncated { attempts })
}
