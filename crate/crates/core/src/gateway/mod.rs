//! Model invocation: a live OpenAI-compatible HTTP backend with an on-disk
//! response cache, and a deterministic simulated backend.

mod cache;
mod live;
mod scripted;
mod simulated;

pub use cache::{cache_key, ResponseCache};
pub use live::LiveBackend;
pub use scripted::FnBackend;
pub use simulated::{simulate_complete, SimBackend};

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Protocol { status: u16, body: String },
    #[error("malformed response: {0}")]
    Parse(String),
    #[error("cache error: {0}")]
    Cache(#[from] std::io::Error),
    #[error("simulator: {0}")]
    Simulator(String),
}

impl GatewayError {
    pub fn is_transport(&self) -> bool {
        matches!(self, GatewayError::Transport { .. })
    }
}

/// One single-turn chat request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ModelRequest {
    pub fn new(system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        Self {
            system_text: system_text.into(),
            user_text: user_text.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendTag {
    Live,
    Simulated,
    Cache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelResponse {
    pub text: String,
    pub backend_tag: BackendTag,
    pub latency: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    /// Base URL; `/v1/chat/completions` is appended.
    pub endpoint_url: String,
    pub model_name: String,
    pub timeout: Duration,
    pub retry_budget: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff_base: Duration,
    pub cache_dir: Option<PathBuf>,
    /// Answer from cached responses when present. Responses are written to
    /// `cache_dir` either way.
    pub read_cache: bool,
    pub api_key: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://127.0.0.1:8080".into(),
            model_name: "local-model".into(),
            timeout: Duration::from_secs(120),
            retry_budget: 3,
            backoff_base: Duration::from_millis(500),
            cache_dir: None,
            read_cache: true,
            api_key: None,
        }
    }
}

/// Anything that can answer a [`ModelRequest`].
///
/// Implementations must be safe to call from several threads at once.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, GatewayError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        (**self).complete(request)
    }
}

/// One-shot convenience over [`LiveBackend`].
pub fn complete(request: &ModelRequest, config: &BackendConfig) -> Result<ModelResponse, GatewayError> {
    LiveBackend::new(config.clone())?.complete(request)
}
