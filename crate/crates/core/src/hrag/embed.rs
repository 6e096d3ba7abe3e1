//! Text embedders. Every returned vector is unit-normalized.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("embedding backend returned {got} vectors for {expected} inputs")]
    Arity { expected: usize, got: usize },
}

pub trait Embedder: Send + Sync {
    /// Stable identifier; part of the on-disk vector cache key.
    fn id(&self) -> String;

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

pub fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Deterministic feature-hashing embedder over word unigrams and bigrams.
///
/// Used by tests and offline runs; similar wording yields similar vectors,
/// which is enough to exercise retrieval end to end.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let lower = text.to_lowercase();
        let tokens: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        let mut add = |feature: &str, weight: f64| {
            let h = fnv1a(feature.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign * weight;
        };
        for t in &tokens {
            add(t, 1.0);
        }
        for pair in tokens.windows(2) {
            add(&format!("{} {}", pair[0], pair[1]), 0.5);
        }
        if v.iter().all(|x| *x == 0.0) {
            // empty or fully cancelled input still needs a unit vector
            v[(fnv1a(lower.as_bytes()) % self.dim as u64) as usize] = 1.0;
        }
        normalize(v)
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> String {
        format!("hash-fnv1a-{}", self.dim)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// OpenAI-compatible embeddings endpoint: POST `{model, input}`, reads `data[i].embedding`.
pub struct HttpEmbedder {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key_env: &str, timeout: Duration) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbedError::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(api_key_env).ok().filter(|k| !k.is_empty()),
            client,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> String {
        format!("http-{}", self.model)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let mut builder = self.client.post(&self.endpoint).json(&EmbedRequest {
            model: &self.model,
            input: texts,
        });
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| EmbedError::BackendUnavailable(e.to_string()))?;
        let mut parsed: EmbedResponse = response
            .json()
            .map_err(|e| EmbedError::BackendUnavailable(format!("malformed reply: {e}")))?;
        if parsed.data.len() != texts.len() {
            return Err(EmbedError::Arity {
                expected: texts.len(),
                got: parsed.data.len(),
            });
        }
        parsed.data.sort_by_key(|d| d.index.unwrap_or(usize::MAX));
        Ok(parsed.data.into_iter().map(|d| normalize(d.embedding)).collect())
    }
}

/// Wraps an embedder and counts `embed` calls.
pub struct CountingEmbedder<E> {
    inner: E,
    calls: AtomicUsize,
}

impl<E: Embedder> CountingEmbedder<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<E: Embedder> Embedder for CountingEmbedder<E> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.embed(texts)
    }
}
