//! OpenAI-compatible HTTP backend with retry and backoff.

use std::time::Duration;

use rand::Rng;
use serde::Deserialize;
use serde_json::json;

use super::{BackendConfig, ChatBackend, ChatRequest, ChatResponse, ClientError, EmbedBackend, Usage};
use crate::coding_rate::normalize;

/// Maximum number of texts per embeddings request.
const EMBED_BATCH: usize = 64;
/// Hard ceiling on a single backoff delay.
const MAX_BACKOFF: Duration = Duration::from_secs(30);

/// Chat + embeddings over `POST {base_url}/chat/completions` and
/// `POST {base_url}/embeddings`, authenticated with a bearer token read from
/// the environment variable named in the config.
pub struct HttpBackend {
    config: BackendConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, ClientError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            ClientError::Config(format!(
                "API key environment variable {} is not set",
                config.api_key_env
            ))
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ClientError::Config(format!("failed to build HTTP client: {e}")))?;
        Ok(Self {
            config,
            api_key,
            client,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }

    /// POST with retries on 429/5xx/transport failures. Total attempts are
    /// bounded by `1 + max_retries`.
    fn post_json(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value, ClientError> {
        let url = self.url(path);
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let outcome = self
                .client
                .post(&url)
                .bearer_auth(&self.api_key)
                .json(body)
                .send();
            let retry_message = match outcome {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp
                            .json::<serde_json::Value>()
                            .map_err(|e| ClientError::Protocol(format!("invalid JSON body: {e}")));
                    }
                    if status.as_u16() == 401 || status.as_u16() == 403 {
                        return Err(ClientError::Config(format!(
                            "authentication rejected with status {status}"
                        )));
                    }
                    if status.as_u16() == 429 || status.is_server_error() {
                        format!("status {status}")
                    } else {
                        return Err(ClientError::Protocol(format!(
                            "unexpected status {status}"
                        )));
                    }
                }
                Err(e) => format!("transport error: {e}"),
            };
            if attempts > self.config.max_retries {
                return Err(ClientError::Transport {
                    attempts,
                    message: retry_message,
                });
            }
            std::thread::sleep(backoff_delay(self.config.retry_base, attempts));
        }
    }
}

/// Exponential backoff with multiplicative jitter in [0.5, 1.5).
fn backoff_delay(base: Duration, attempt: u32) -> Duration {
    let exp = base.as_secs_f64() * 2f64.powi(attempt.saturating_sub(1) as i32);
    let jitter = rand::thread_rng().gen_range(0.5..1.5);
    Duration::from_secs_f64((exp * jitter).min(MAX_BACKOFF.as_secs_f64()))
}

#[derive(Deserialize)]
struct WireChatResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: String,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct WireEmbeddingResponse {
    data: Vec<WireEmbedding>,
}

#[derive(Deserialize)]
struct WireEmbedding {
    index: usize,
    embedding: Vec<f64>,
}

impl ChatBackend for HttpBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        request.validate()?;
        let body = json!({
            "model": self.config.model_name,
            "messages": request
                .messages
                .iter()
                .map(|m| json!({"role": m.role, "content": m.content}))
                .collect::<Vec<_>>(),
            "temperature": request.temperature,
        });
        let value = self.post_json("chat/completions", &body)?;
        let parsed: WireChatResponse = serde_json::from_value(value)
            .map_err(|e| ClientError::Protocol(format!("unexpected chat schema: {e}")))?;
        let first = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ClientError::Protocol("response has no choices".into()))?;
        let usage = parsed.usage.unwrap_or_default();
        Ok(ChatResponse {
            content: first.message.content,
            usage: Usage {
                prompt_tokens: usage.prompt_tokens,
                completion_tokens: usage.completion_tokens,
            },
        })
    }
}

impl EmbedBackend for HttpBackend {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError> {
        if texts.is_empty() {
            return Err(ClientError::InvalidInput("no texts to embed".into()));
        }
        if let Some(i) = texts.iter().position(|t| t.is_empty()) {
            return Err(ClientError::InvalidInput(format!(
                "text at index {i} is empty"
            )));
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(EMBED_BATCH) {
            let body = json!({
                "model": self.config.model_name,
                "input": chunk,
            });
            let value = self.post_json("embeddings", &body)?;
            let parsed: WireEmbeddingResponse = serde_json::from_value(value)
                .map_err(|e| ClientError::Protocol(format!("unexpected embedding schema: {e}")))?;
            if parsed.data.len() != chunk.len() {
                return Err(ClientError::Protocol(format!(
                    "expected {} embeddings, got {}",
                    chunk.len(),
                    parsed.data.len()
                )));
            }
            let mut rows = parsed.data;
            rows.sort_by_key(|r| r.index);
            for row in rows {
                let unit = normalize(&row.embedding)
                    .map_err(|e| ClientError::Protocol(format!("bad embedding vector: {e}")))?;
                out.push(unit);
            }
        }
        Ok(out)
    }

    fn model_id(&self) -> String {
        self.config.model_name.clone()
    }
}
