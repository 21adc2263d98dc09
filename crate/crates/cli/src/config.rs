//! Run configuration: one TOML file with dotted sections, CLI flags on top.
//!
//! Unknown keys are rejected so typos fail loudly at startup. Secrets never
//! live in the file; remote backends read their API key from the environment
//! variable named in `api_key_env`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use rubric_core::client::{
    BackendConfig, ChatBackend, EmbedBackend, HashProjectionEmbedder, HttpBackend,
    KeywordAxisEmbedder, SyntheticChatBackend, DEFAULT_API_KEY_ENV,
};
use rubric_core::coding_rate::CodingRateParams;
use rubric_core::pipeline::PipelineConfig;
use rubric_core::selection::SelectionConfig;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub pipeline: PipelineSection,
    pub selection: SelectionSection,
    pub backend: BackendSection,
    pub paths: PathsSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub batch_size: usize,
    pub e_max: u32,
    pub max_rubrics_per_pair: usize,
    pub theme_count: usize,
    pub seed: u64,
    pub max_batch_iterations: usize,
    pub parallelism: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let d = PipelineConfig::default();
        Self {
            batch_size: d.batch_size,
            e_max: d.e_max,
            max_rubrics_per_pair: d.max_rubrics_per_pair,
            theme_count: d.theme_count,
            seed: d.seed,
            max_batch_iterations: d.max_batch_iterations,
            parallelism: d.parallelism,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionSection {
    /// Core-set size cap; 0 means unbounded.
    pub max_size: usize,
    pub tau_min: f64,
    pub patience: usize,
    pub epsilon: f64,
    pub jitter: f64,
}

impl Default for SelectionSection {
    fn default() -> Self {
        let d = SelectionConfig::default();
        Self {
            max_size: d.max_size.unwrap_or(0),
            tau_min: d.tau_min,
            patience: d.patience,
            epsilon: d.params.epsilon,
            jitter: d.params.jitter,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BackendSection {
    pub chat: EndpointSection,
    pub embed: EmbedEndpointSection,
    /// Separate judging backend; falls back to `chat` when absent.
    pub judge: Option<EndpointSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EndpointSection {
    /// "openai" for a remote OpenAI-compatible endpoint, "synthetic" for the
    /// deterministic offline backend.
    pub kind: String,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub temperature: f64,
}

impl Default for EndpointSection {
    fn default() -> Self {
        Self {
            kind: "synthetic".into(),
            base_url: None,
            model: None,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 120,
            max_retries: 3,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedEndpointSection {
    /// "openai", "hash" (seeded projection mock), or "keyword-axis".
    pub kind: String,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// Mock embedder dimensionality.
    pub dim: usize,
    /// Mock embedder seed.
    pub seed: u64,
    /// Axis keywords for the keyword-axis mock.
    pub keywords: Vec<String>,
}

impl Default for EmbedEndpointSection {
    fn default() -> Self {
        Self {
            kind: "hash".into(),
            base_url: None,
            model: None,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_secs: 120,
            max_retries: 3,
            dim: 64,
            seed: 0,
            keywords: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub dataset: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config error: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    /// Load `path` when given, defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn selection_config(&self) -> Result<SelectionConfig, CliError> {
        let params = CodingRateParams::new(self.selection.epsilon, self.selection.jitter)
            .map_err(|e| CliError::Validation(format!("config error: {e}")))?;
        let config = SelectionConfig {
            max_size: (self.selection.max_size > 0).then_some(self.selection.max_size),
            tau_min: self.selection.tau_min,
            patience: self.selection.patience,
            params,
        };
        config
            .validate()
            .map_err(|e| CliError::Validation(format!("config error: {e}")))?;
        Ok(config)
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig, CliError> {
        let config = PipelineConfig {
            batch_size: self.pipeline.batch_size,
            e_max: self.pipeline.e_max,
            max_rubrics_per_pair: self.pipeline.max_rubrics_per_pair,
            selection: self.selection_config()?,
            theme_count: self.pipeline.theme_count,
            seed: self.pipeline.seed,
            max_batch_iterations: self.pipeline.max_batch_iterations,
            parallelism: self.pipeline.parallelism,
        };
        config
            .validate()
            .map_err(|e| CliError::Validation(format!("config error: {e}")))?;
        Ok(config)
    }

    pub fn chat_backend(&self) -> Result<Box<dyn ChatBackend>, CliError> {
        build_chat(&self.backend.chat)
    }

    /// The judging backend: the dedicated endpoint when configured, else chat.
    pub fn judge_backend(&self) -> Result<Box<dyn ChatBackend>, CliError> {
        match &self.backend.judge {
            Some(section) => build_chat(section),
            None => self.chat_backend(),
        }
    }

    pub fn embed_backend(&self) -> Result<Box<dyn EmbedBackend>, CliError> {
        let section = &self.backend.embed;
        match section.kind.as_str() {
            "openai" => Ok(Box::new(http_backend(
                section.base_url.as_deref(),
                section.model.as_deref(),
                &section.api_key_env,
                section.timeout_secs,
                section.max_retries,
                0.0,
            )?)),
            "hash" => Ok(Box::new(HashProjectionEmbedder::new(section.seed, section.dim))),
            "keyword-axis" => KeywordAxisEmbedder::new(
                section.keywords.clone(),
                section.dim,
                section.seed,
            )
            .map(|e| Box::new(e) as Box<dyn EmbedBackend>)
            .map_err(|e| CliError::Validation(format!("config error: {e}"))),
            other => Err(CliError::Validation(format!(
                "unknown embed backend kind {other:?} (expected openai, hash, or keyword-axis)"
            ))),
        }
    }
}

fn build_chat(section: &EndpointSection) -> Result<Box<dyn ChatBackend>, CliError> {
    match section.kind.as_str() {
        "openai" => Ok(Box::new(http_backend(
            section.base_url.as_deref(),
            section.model.as_deref(),
            &section.api_key_env,
            section.timeout_secs,
            section.max_retries,
            section.temperature,
        )?)),
        "synthetic" => Ok(Box::new(SyntheticChatBackend::new())),
        other => Err(CliError::Validation(format!(
            "unknown chat backend kind {other:?} (expected openai or synthetic)"
        ))),
    }
}

fn http_backend(
    base_url: Option<&str>,
    model: Option<&str>,
    api_key_env: &str,
    timeout_secs: u64,
    max_retries: u32,
    temperature: f64,
) -> Result<HttpBackend, CliError> {
    let base_url = base_url.ok_or_else(|| {
        CliError::Validation("openai backend needs base_url in the config".into())
    })?;
    let model = model.ok_or_else(|| {
        CliError::Validation("openai backend needs model in the config".into())
    })?;
    let mut config = BackendConfig::new(base_url, model);
    config.api_key_env = api_key_env.to_string();
    config.timeout = Duration::from_secs(timeout_secs);
    config.max_retries = max_retries;
    config.temperature = temperature;
    HttpBackend::new(config).map_err(|e| CliError::Validation(format!("config error: {e}")))
}
