//! Embedding providers: the in-process reference embedder and an HTTP client
//! for a remote sentence encoder.
//!
//! Remote wire contract: `POST <endpoint>` with `{"texts": [...]}` answered
//! by `{"model_id": ..., "dim": ..., "vectors": [[...], ...]}`. Vectors are
//! L2-normalized on receipt.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use asksci_core::domain::Embedding;
use asksci_core::embed::{ReferenceEmbedder, DEFAULT_DIM, DEFAULT_MODEL_ID};
use serde::{Deserialize, Serialize};

pub const ENV_ENDPOINT: &str = "EMBED_ENDPOINT";
pub const ENV_TIMEOUT_MS: &str = "EMBED_TIMEOUT_MS";

/// Texts per remote request during batch embedding.
const REMOTE_BATCH: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding service unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("malformed embedding response: {0}")]
    BadResponse(String),
    #[error("invalid embedder config: {0}")]
    Config(String),
    #[error("empty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    #[default]
    Reference,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub provider: Provider,
    pub dim: usize,
    pub model_id: String,
    pub remote_endpoint: Option<String>,
    pub timeout_ms: u64,
    /// Concurrent requests allowed against the remote provider.
    pub max_in_flight: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            provider: Provider::Reference,
            dim: DEFAULT_DIM,
            model_id: DEFAULT_MODEL_ID.to_string(),
            remote_endpoint: None,
            timeout_ms: 2000,
            max_in_flight: 8,
        }
    }
}

impl EmbedderConfig {
    pub fn remote(endpoint: impl Into<String>, dim: usize) -> Self {
        Self {
            provider: Provider::Remote,
            dim,
            remote_endpoint: Some(endpoint.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::Config("dim must be positive".into()));
        }
        if self.timeout_ms == 0 || self.max_in_flight == 0 {
            return Err(EmbedError::Config("timeout_ms and max_in_flight must be positive".into()));
        }
        match (self.provider, &self.remote_endpoint) {
            (Provider::Remote, None) => Err(EmbedError::Config("remote provider needs remote_endpoint".into())),
            (Provider::Reference, Some(_)) => Err(EmbedError::Config("remote_endpoint set for reference provider".into())),
            _ => Ok(()),
        }
    }

    /// Applies `EMBED_ENDPOINT` / `EMBED_TIMEOUT_MS` to a remote provider config.
    pub fn with_env_overrides(self) -> Result<Self, EmbedError> {
        self.with_overrides(
            std::env::var(ENV_ENDPOINT).ok(),
            std::env::var(ENV_TIMEOUT_MS).ok(),
        )
    }

    fn with_overrides(mut self, endpoint: Option<String>, timeout: Option<String>) -> Result<Self, EmbedError> {
        if self.provider != Provider::Remote {
            return Ok(self);
        }
        if let Some(e) = endpoint.filter(|e| !e.is_empty()) {
            self.remote_endpoint = Some(e);
        }
        if let Some(t) = timeout {
            self.timeout_ms = t
                .parse()
                .map_err(|_| EmbedError::Config(format!("{ENV_TIMEOUT_MS}={t} is not an integer")))?;
        }
        Ok(self)
    }
}

/// A configured embedding provider.
#[derive(Debug)]
pub enum Embedder {
    Reference(ReferenceEmbedder),
    Remote(RemoteEmbedder),
}

impl Embedder {
    pub fn from_config(config: &EmbedderConfig) -> Result<Self, EmbedError> {
        config.validate()?;
        Ok(match config.provider {
            Provider::Reference => Self::Reference(ReferenceEmbedder::new(config.dim, config.model_id.clone())),
            Provider::Remote => Self::Remote(RemoteEmbedder::new(config)?),
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Reference(r) => r.dim(),
            Self::Remote(r) => r.dim,
        }
    }

    /// The configured model id. A remote provider reports its own per response.
    pub fn model_id(&self) -> &str {
        match self {
            Self::Reference(r) => r.model_id(),
            Self::Remote(r) => &r.model_id,
        }
    }

    pub fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        match self {
            Self::Reference(r) => Ok(r.embed(text)),
            Self::Remote(r) => Ok(r.request(&[text])?.remove(0)),
        }
    }

    /// Embeds every text; element `i` equals `embed(texts[i])`.
    pub fn embed_batch<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Result<Vec<Embedding>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyBatch);
        }
        match self {
            Self::Reference(r) => Ok(texts.iter().map(|t| r.embed(t.as_ref())).collect()),
            Self::Remote(r) => {
                let mut out = Vec::with_capacity(texts.len());
                for batch in texts.chunks(REMOTE_BATCH) {
                    let refs: Vec<&str> = batch.iter().map(AsRef::as_ref).collect();
                    out.extend(r.request(&refs)?);
                }
                Ok(out)
            }
        }
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct RemoteResponse {
    model_id: String,
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

/// Blocking HTTP client for a remote embedding service.
#[derive(Debug)]
pub struct RemoteEmbedder {
    endpoint: String,
    dim: usize,
    model_id: String,
    agent: ureq::Agent,
    permits: Permits,
}

impl RemoteEmbedder {
    pub fn new(config: &EmbedderConfig) -> Result<Self, EmbedError> {
        let endpoint = config
            .remote_endpoint
            .clone()
            .ok_or_else(|| EmbedError::Config("remote provider needs remote_endpoint".into()))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        Ok(Self {
            endpoint,
            dim: config.dim,
            model_id: config.model_id.clone(),
            agent,
            permits: Permits::new(config.max_in_flight),
        })
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        let response: RemoteResponse = {
            let _permit = self.permits.acquire();
            let mut resp = self
                .agent
                .post(&self.endpoint)
                .send_json(RemoteRequest { texts })
                .map_err(|e| EmbedError::RemoteUnavailable(e.to_string()))?;
            resp.body_mut()
                .read_json()
                .map_err(|e| EmbedError::BadResponse(e.to_string()))?
        };
        if response.dim != self.dim {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dim,
                found: response.dim,
            });
        }
        if response.vectors.len() != texts.len() {
            return Err(EmbedError::BadResponse(format!(
                "{} vectors for {} texts",
                response.vectors.len(),
                texts.len()
            )));
        }
        response
            .vectors
            .iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(EmbedError::DimensionMismatch {
                        expected: self.dim,
                        found: v.len(),
                    });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(EmbedError::BadResponse("non-finite vector component".into()));
                }
                Ok(Embedding::normalized(v, response.model_id.as_str()))
            })
            .collect()
    }
}

/// Counting semaphore bounding in-flight remote requests.
#[derive(Debug)]
struct Permits {
    available: Mutex<usize>,
    freed: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Permits);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}
