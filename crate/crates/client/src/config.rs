//! TOML configuration for the command-line tool.
//!
//! ```toml
//! [system]
//! system_name = "my-rag"
//! retriever_name = "e5"
//! generator_name = "qwen"
//!
//! [retriever]
//! url = "http://localhost:8081/v1/embeddings"
//! model = "e5-large"
//!
//! [generator]
//! url = "http://localhost:8082/v1/completions"
//! model = "qwen"
//! max_tokens = 1000
//!
//! [prompt]
//! query_prefix = "search_query: "
//! doc_prefix = "search_document: "
//! max_context_chars = 8000
//!
//! [baseline]
//! k = 5
//! response_cap = 4000
//!
//! [service]
//! url = "http://localhost:8000"
//! ```

use std::path::Path;
use std::time::Duration;

use ragbench_core::filtering::FilterConfig;
use serde::{Deserialize, Serialize};

use crate::baseline::BaselineConfig;
use crate::prompt::PromptSpec;
use crate::ClientError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemNames {
    pub system_name: String,
    pub retriever_name: String,
    pub generator_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Endpoint {
    pub url: String,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_max_tokens() -> u32 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub url: String,
    pub timeout_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            url: "http://127.0.0.1:8000".into(),
            timeout_secs: 600,
        }
    }
}

/// Backends for building a new revision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSection {
    pub extractor: Endpoint,
    pub generator: Endpoint,
    pub judge: Endpoint,
    #[serde(default)]
    pub probes: Vec<Endpoint>,
    /// `POST {"text"}` classifier; every question passes when absent.
    #[serde(default)]
    pub acceptability_url: Option<String>,
    #[serde(default = "default_quota")]
    pub quota: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_locale")]
    pub locale: String,
    #[serde(default)]
    pub presence_threshold: Option<f64>,
}

fn default_quota() -> usize {
    150
}

fn default_locale() -> String {
    "en".into()
}

impl GenerationSection {
    pub fn filter_config(&self) -> FilterConfig {
        let mut c = FilterConfig::default();
        if let Some(t) = self.presence_threshold {
            c.thresholds.presence = t;
            c.thresholds.bridge = t;
        }
        c
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    pub system: SystemNames,
    pub retriever: Option<Endpoint>,
    pub generator: Option<Endpoint>,
    pub prompt: PromptSpec,
    pub baseline: BaselineConfig,
    pub service: ServiceConfig,
    pub generation: Option<GenerationSection>,
    pub timeout_secs: Option<u64>,
}

impl ClientConfig {
    pub fn load(path: &Path) -> Result<Self, ClientError> {
        let fail = |reason: String| ClientError::Config {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
        let config: Self = toml::from_str(&text).map_err(|e| fail(e.to_string()))?;
        config.prompt.validate()?;
        Ok(config)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs.unwrap_or(120))
    }
}
