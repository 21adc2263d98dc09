//! Backend handles for chat-completion and embedding models.
//!
//! One wire implementation speaks the OpenAI-compatible HTTP dialect
//! ([`HttpBackend`]); deterministic in-process mocks cover tests and offline
//! runs. Both sides of the pipeline only ever see the [`ChatBackend`] and
//! [`EmbedBackend`] traits.

mod cache;
mod http;
mod mock;

pub use cache::EmbeddingCache;
pub use http::HttpBackend;
pub use mock::{
    HashProjectionEmbedder, KeywordAxisEmbedder, ScriptedChatBackend, SyntheticChatBackend,
};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable consulted for the API key when none is configured.
pub const DEFAULT_API_KEY_ENV: &str = "RUBRIC_API_KEY";

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("mock script exhausted")]
    ScriptExhausted,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Connection settings for one remote endpoint.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BackendConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub temperature: f64,
    /// Base delay of the exponential backoff schedule.
    pub retry_base: Duration,
}

impl BackendConfig {
    pub const MAX_RETRIES_LIMIT: u32 = 5;

    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout: Duration::from_secs(120),
            max_retries: 3,
            temperature: 0.0,
            retry_base: Duration::from_secs(1),
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.base_url.is_empty() {
            return Err(ClientError::Config("base_url must be non-empty".into()));
        }
        if self.model_name.is_empty() {
            return Err(ClientError::Config("model_name must be non-empty".into()));
        }
        if self.max_retries > Self::MAX_RETRIES_LIMIT {
            return Err(ClientError::Config(format!(
                "max_retries {} exceeds limit {}",
                self.max_retries,
                Self::MAX_RETRIES_LIMIT
            )));
        }
        if self.timeout.is_zero() {
            return Err(ClientError::Config("timeout must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ClientError::Config(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn user_prompt(prompt: impl Into<String>, temperature: f64) -> Self {
        Self {
            messages: vec![ChatMessage::user(prompt)],
            temperature,
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(ClientError::InvalidInput(
                "chat request needs at least one user message".into(),
            ));
        }
        Ok(())
    }

    /// Content of the last user message; the prompt mocks pattern-match on.
    pub fn last_user_content(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    /// May be empty; callers decide how to handle that.
    pub content: String,
    pub usage: Usage,
}

/// A chat-completion model handle. Implementations must be shareable across
/// threads; mocks serialize script consumption internally.
pub trait ChatBackend: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError>;
}

/// An embedding model handle. Returned vectors are unit-normalized and the
/// output order matches the input order.
pub trait EmbedBackend: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError>;

    /// Stable identifier used for cache keys.
    fn model_id(&self) -> String;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = BackendConfig::new("http://localhost:1", "m");
        assert!(c.validate().is_ok());
        c.max_retries = 9;
        assert!(c.validate().is_err());
        c.max_retries = 2;
        c.temperature = 3.0;
        assert!(c.validate().is_err());
        c.temperature = 0.7;
        c.timeout = Duration::ZERO;
        assert!(c.validate().is_err());
    }

    #[test]
    fn request_needs_user_message() {
        let req = ChatRequest {
            messages: vec![ChatMessage::system("sys")],
            temperature: 0.0,
        };
        assert!(req.validate().is_err());
        assert!(ChatRequest::user_prompt("hi", 0.0).validate().is_ok());
    }
}
