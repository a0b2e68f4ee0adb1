//! Pluggable model backends and their retry policy.
//!
//! Every model the pipeline talks to (extraction and generation LLMs,
//! judges, closed-book probes, embedders) is a request/response service
//! behind one of the traits here. Deterministic in-process implementations
//! are provided for tests, fixtures and offline demos.

use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::text;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    /// Worth retrying: timeouts, connection resets, overload.
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend failure: {0}")]
    Fatal(String),
}

impl BackendError {
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }
}

/// Prompt in, text out.
pub trait TextBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
}

/// Text in, dense vector out.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f32>, BackendError>;
}

impl<T: TextBackend + ?Sized> TextBackend for Arc<T> {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }
}

impl<T: TextBackend + ?Sized> TextBackend for &T {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }
}

impl<T: TextBackend + ?Sized> TextBackend for Box<T> {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }
}

impl<T: Embedder + ?Sized> Embedder for Arc<T> {
    fn embed(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        (**self).embed(text)
    }
}

impl<T: Embedder + ?Sized> Embedder for &T {
    fn embed(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        (**self).embed(text)
    }
}

impl<T: Embedder + ?Sized> Embedder for Box<T> {
    fn embed(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        (**self).embed(text)
    }
}

/// Bounded retry with exponential backoff. Only transient errors are retried.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(200),
        }
    }
}

impl RetryPolicy {
    /// Same attempt budget as the default, no sleeping between attempts.
    pub fn immediate() -> Self {
        Self {
            base_delay: Duration::ZERO,
            ..Self::default()
        }
    }

    pub fn run<T>(&self, mut call: impl FnMut() -> Result<T, BackendError>) -> Result<T, BackendError> {
        let attempts = self.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            match call() {
                Err(err) if err.is_transient() && attempt + 1 < attempts => {
                    let delay = self.base_delay * 2u32.saturating_pow(attempt);
                    log::debug!("transient backend error (attempt {}): {err}", attempt + 1);
                    if !delay.is_zero() {
                        thread::sleep(delay);
                    }
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// How two embedding vectors are compared.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    Cosine,
    Dot,
}

impl Similarity {
    pub fn score(self, a: &[f32], b: &[f32]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
        match self {
            Similarity::Dot => dot,
            Similarity::Cosine => {
                let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
                let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    0.0
                } else {
                    dot / (na * nb)
                }
            }
        }
    }
}

/// Wraps a closure as a [`TextBackend`].
pub struct FnBackend<F>(pub F);

impl<F> TextBackend for FnBackend<F>
where
    F: Fn(&str) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        (self.0)(prompt)
    }
}

/// Replies with the response of the first rule whose needle occurs in the
/// prompt, or with the fallback. Every prompt is recorded.
#[derive(Default)]
pub struct ScriptedBackend {
    rules: Vec<(String, String)>,
    fallback: Option<String>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Always answers `response`.
    pub fn constant(response: impl Into<String>) -> Self {
        Self::new().with_fallback(response)
    }

    pub fn with_rule(mut self, needle: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push((needle.into(), response.into()));
        self
    }

    pub fn with_fallback(mut self, response: impl Into<String>) -> Self {
        self.fallback = Some(response.into());
        self
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("prompt log poisoned").clone()
    }
}

impl TextBackend for ScriptedBackend {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.prompts
            .lock()
            .expect("prompt log poisoned")
            .push(prompt.to_owned());
        self.rules
            .iter()
            .find(|(needle, _)| prompt.contains(needle.as_str()))
            .map(|(_, response)| response.clone())
            .or_else(|| self.fallback.clone())
            .ok_or_else(|| BackendError::Fatal("no scripted response for prompt".into()))
    }
}

/// Deterministic feature-hashing embedder: each metric token increments one
/// of `dims` buckets chosen by FNV-1a.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dims: usize,
}

impl HashEmbedder {
    pub fn new(dims: usize) -> Self {
        assert!(dims > 0, "embedding dimension must be positive");
        Self { dims }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |hash, b| {
        (hash ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3)
    })
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        let mut vector = vec![0.0; self.dims];
        for token in text::tokenize(text) {
            let bucket = (fnv1a(token.as_bytes()) % self.dims as u64) as usize;
            vector[bucket] += 1.0;
        }
        Ok(vector)
    }
}

/// Binary bag-of-words over a fixed vocabulary. Under [`Similarity::Dot`]
/// the score of two texts is the number of distinct vocabulary tokens they
/// share.
#[derive(Debug, Clone)]
pub struct VocabularyEmbedder {
    vocabulary: Vec<String>,
}

impl VocabularyEmbedder {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocabulary: Vec<String> = tokens.into_iter().flat_map(|t| text::tokenize(t.as_ref())).collect();
        vocabulary.sort();
        vocabulary.dedup();
        Self { vocabulary }
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }
}

impl Embedder for VocabularyEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        let mut vector = vec![0.0; self.vocabulary.len()];
        for token in text::tokenize(text) {
            if let Ok(slot) = self.vocabulary.binary_search(&token) {
                vector[slot] = 1.0;
            }
        }
        Ok(vector)
    }
}
