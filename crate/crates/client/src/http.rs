//! Blocking HTTP clients for model backends and the evaluation service.
//!
//! Text and embedding backends speak the common completions/embeddings
//! JSON shape (`/v1/completions`, `/v1/embeddings`).

use std::time::Duration;

use ragbench_core::backend::{BackendError, Embedder, TextBackend};
use ragbench_core::filtering::AcceptabilityScorer;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use ureq::Agent;

use crate::ClientError;

fn agent(timeout: Duration) -> Agent {
    Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

/// POSTs `body` and decodes a 2xx JSON reply. 429 and 5xx replies and
/// transport failures are transient; other statuses are fatal.
fn post_json<T: DeserializeOwned>(agent: &Agent, url: &str, body: &Value) -> Result<T, BackendError> {
    let mut resp = agent
        .post(url)
        .send_json(body)
        .map_err(|e| BackendError::Transient(format!("{url}: {e}")))?;
    let status = resp.status().as_u16();
    if status == 429 || status >= 500 {
        return Err(BackendError::Transient(format!("{url}: HTTP {status}")));
    }
    if !(200..300).contains(&status) {
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        return Err(BackendError::Fatal(format!("{url}: HTTP {status}: {text}")));
    }
    resp.body_mut()
        .read_json()
        .map_err(|e| BackendError::Fatal(format!("{url}: bad reply: {e}")))
}

pub struct HttpTextBackend {
    agent: Agent,
    url: String,
    model: String,
    max_tokens: u32,
}

impl HttpTextBackend {
    pub fn new(url: &str, model: &str, max_tokens: u32, timeout: Duration) -> Self {
        Self {
            agent: agent(timeout),
            url: url.to_owned(),
            model: model.to_owned(),
            max_tokens,
        }
    }
}

#[derive(Deserialize)]
struct Completions {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
}

impl TextBackend for HttpTextBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model,
            "prompt": prompt,
            "max_tokens": self.max_tokens,
            "temperature": 0,
        });
        let reply: Completions = post_json(&self.agent, &self.url, &body)?;
        reply
            .choices
            .into_iter()
            .next()
            .map(|c| c.text)
            .ok_or_else(|| BackendError::Fatal(format!("{}: no choices in reply", self.url)))
    }
}

pub struct HttpEmbedder {
    agent: Agent,
    url: String,
    model: String,
}

impl HttpEmbedder {
    pub fn new(url: &str, model: &str, timeout: Duration) -> Self {
        Self {
            agent: agent(timeout),
            url: url.to_owned(),
            model: model.to_owned(),
        }
    }
}

#[derive(Deserialize)]
struct Embeddings {
    data: Vec<EmbeddingRow>,
}

#[derive(Deserialize)]
struct EmbeddingRow {
    embedding: Vec<f32>,
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        let reply: Embeddings = post_json(&self.agent, &self.url, &json!({"model": self.model, "input": text}))?;
        reply
            .data
            .into_iter()
            .next()
            .map(|r| r.embedding)
            .ok_or_else(|| BackendError::Fatal(format!("{}: no embedding in reply", self.url)))
    }
}

/// Acceptability classifier behind `POST {"text": ...}` answering
/// `{"score": <0..1>}`.
pub struct HttpScorer {
    agent: Agent,
    url: String,
}

impl HttpScorer {
    pub fn new(url: &str, timeout: Duration) -> Self {
        Self {
            agent: agent(timeout),
            url: url.to_owned(),
        }
    }
}

#[derive(Deserialize)]
struct Score {
    score: f64,
}

impl AcceptabilityScorer for HttpScorer {
    fn score(&self, text: &str) -> Result<f64, BackendError> {
        let reply: Score = post_json(&self.agent, &self.url, &json!({"text": text}))?;
        Ok(reply.score)
    }
}

/// Reply from the evaluation service.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceReply {
    pub status: u16,
    pub body: Value,
}

pub struct ServiceClient {
    agent: Agent,
    base: String,
}

impl ServiceClient {
    pub fn new(base: &str, timeout: Duration) -> Self {
        Self {
            agent: agent(timeout),
            base: base.trim_end_matches('/').to_owned(),
        }
    }

    fn finish(mut resp: ureq::http::Response<ureq::Body>) -> Result<ServiceReply, ClientError> {
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string()?;
        let body = serde_json::from_str(&text).unwrap_or(Value::String(text));
        Ok(ServiceReply { status, body })
    }

    pub fn post(&self, path: &str, body: &Value, token: Option<&str>) -> Result<ServiceReply, ClientError> {
        let mut req = self.agent.post(format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        Self::finish(req.send_json(body)?)
    }

    pub fn get(&self, path: &str, token: Option<&str>) -> Result<ServiceReply, ClientError> {
        let mut req = self.agent.get(format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        Self::finish(req.call()?)
    }
}
