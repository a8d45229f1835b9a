use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{Backend, BackendConfig, BackendTag, GatewayError, ModelRequest, ModelResponse, ResponseCache};

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 2],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

enum Attempt {
    Retryable(GatewayError),
    Fatal(GatewayError),
}

/// Blocking client for `POST {endpoint}/v1/chat/completions`.
pub struct LiveBackend {
    config: BackendConfig,
    agent: Agent,
    cache: Option<ResponseCache>,
    live_calls: AtomicUsize,
}

impl LiveBackend {
    pub fn new(config: BackendConfig) -> Result<Self, GatewayError> {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let cache = config.cache_dir.as_ref().map(ResponseCache::open).transpose()?;
        Ok(Self {
            config,
            agent,
            cache,
            live_calls: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// HTTP requests issued so far, retries included.
    pub fn live_calls(&self) -> usize {
        self.live_calls.load(Ordering::SeqCst)
    }

    fn url(&self) -> String {
        format!("{}/v1/chat/completions", self.config.endpoint_url.trim_end_matches('/'))
    }

    fn attempt(&self, request: &ModelRequest) -> Result<String, Attempt> {
        let body = ChatRequest {
            model: &self.config.model_name,
            messages: [
                ChatMessage {
                    role: "system",
                    content: &request.system_text,
                },
                ChatMessage {
                    role: "user",
                    content: &request.user_text,
                },
            ],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        self.live_calls.fetch_add(1, Ordering::SeqCst);
        let payload = serde_json::to_vec(&body).expect("request serializes");
        let mut req = self.agent.post(&self.url()).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = req.send(&payload[..]).map_err(|e| {
            Attempt::Retryable(GatewayError::Transport {
                attempts: 1,
                message: e.to_string(),
            })
        })?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| {
            Attempt::Retryable(GatewayError::Transport {
                attempts: 1,
                message: e.to_string(),
            })
        })?;
        if !(200..300).contains(&status) {
            let err = GatewayError::Protocol { status, body: text };
            return Err(if status == 429 || status >= 500 {
                Attempt::Retryable(err)
            } else {
                Attempt::Fatal(err)
            });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| Attempt::Fatal(GatewayError::Parse(e.to_string())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Attempt::Fatal(GatewayError::Parse("missing choices[0].message.content".into())))
    }
}

impl Backend for LiveBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        let start = Instant::now();
        let cached = self
            .cache
            .as_ref()
            .filter(|_| self.config.read_cache)
            .and_then(|c| c.get(request, &self.config.model_name));
        if let Some(text) = cached {
            return Ok(ModelResponse {
                text,
                backend_tag: BackendTag::Cache,
                latency: start.elapsed(),
            });
        }
        let attempts = self.config.retry_budget + 1;
        let mut last = None;
        for n in 0..attempts {
            if n > 0 {
                let delay = self.config.backoff_base.saturating_mul(1 << (n - 1).min(16));
                log::warn!("retrying model call in {delay:?} ({}/{})", n, self.config.retry_budget);
                thread::sleep(delay);
            }
            match self.attempt(request) {
                Ok(text) => {
                    if let Some(cache) = &self.cache {
                        cache.put(request, &self.config.model_name, &text)?;
                    }
                    return Ok(ModelResponse {
                        text,
                        backend_tag: BackendTag::Live,
                        latency: start.elapsed(),
                    });
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(e)) => last = Some(e),
            }
        }
        Err(match last {
            Some(GatewayError::Transport { message, .. }) => GatewayError::Transport { attempts, message },
            Some(other) => other,
            None => unreachable!("at least one attempt is made"),
        })
    }
}
