//! Text embeddings.
//!
//! The default embedder is a seeded feature hasher: text is split into
//! lowercase alphanumeric tokens, every token is hashed into one of `dim`
//! buckets with a ±1 sign, and the bucket vector is L2-normalized. Empty
//! text maps to the zero vector. A remote mode posts texts to an HTTP
//! embedding service instead.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

/// Environment variable that overrides the configured remote endpoint.
pub const ENDPOINT_ENV: &str = "MLMEM_EMBED_ENDPOINT";

pub const DEFAULT_DIM: usize = 256;
pub const MIN_DIM: usize = 8;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Errors from the embedding service client.
#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding service transport failure: {0}")]
    Transport(String),
    #[error("malformed embedding service response: {0}")]
    Malformed(String),
}

/// A fixed-dimension real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn dot(&self, other: &Embedding) -> Result<f64> {
        check_dims(self, other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    /// Unit-length copy; the zero vector stays zero.
    pub fn normalized(&self) -> Embedding {
        let norm = self.norm();
        if norm == 0.0 {
            return self.clone();
        }
        Embedding {
            values: self.values.iter().map(|v| v / norm).collect(),
        }
    }

    /// `self += weight * other`.
    pub fn add_scaled(&mut self, other: &Embedding, weight: f64) -> Result<()> {
        check_dims(self, other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += weight * b;
        }
        Ok(())
    }

    pub fn scaled(&self, weight: f64) -> Embedding {
        Embedding {
            values: self.values.iter().map(|v| v * weight).collect(),
        }
    }

    /// Squared Euclidean distance.
    pub fn distance_sq(&self, other: &Embedding) -> Result<f64> {
        check_dims(self, other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }
}

fn check_dims(a: &Embedding, b: &Embedding) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Contract(format!(
            "embedding dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Cosine similarity in `[-1, 1]`; zero if either side is the zero vector.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    let dot = a.dot(b)?;
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / denom).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMode {
    #[default]
    Deterministic,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub dim: usize,
    pub mode: EmbedMode,
    pub remote_endpoint: Option<String>,
    pub seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            mode: EmbedMode::Deterministic,
            remote_endpoint: None,
            seed: 0,
        }
    }
}

impl EmbedderConfig {
    pub fn deterministic(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            ..Self::default()
        }
    }

    /// Endpoint to use in remote mode, with the environment override applied.
    pub fn resolved_endpoint(&self) -> Option<String> {
        match std::env::var(ENDPOINT_ENV) {
            Ok(url) if !url.trim().is_empty() => Some(url),
            _ => self.remote_endpoint.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < MIN_DIM {
            return Err(Error::InvalidConfig(format!(
                "embedder dim must be >= {MIN_DIM}, got {}",
                self.dim
            )));
        }
        match self.mode {
            EmbedMode::Deterministic if self.remote_endpoint.is_some() => Err(
                Error::InvalidConfig("remote_endpoint set but mode is deterministic".into()),
            ),
            EmbedMode::Remote if self.resolved_endpoint().is_none() => Err(Error::InvalidConfig(
                format!("remote mode requires remote_endpoint or {ENDPOINT_ENV}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Lowercase alphanumeric word tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn token_hash(token: &str, seed: u64) -> u64 {
    let mut h = FNV_OFFSET ^ mix64(seed);
    for byte in token.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(FNV_PRIME);
    }
    mix64(h)
}

/// Feature-hash embedding of `text`. Pure and stable across processes.
pub fn hash_embed(text: &str, dim: usize, seed: u64) -> Embedding {
    let mut values = vec![0.0; dim];
    for token in tokenize(text) {
        let h = token_hash(&token, seed);
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        values[bucket] += sign;
    }
    Embedding { values }.normalized()
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct RemoteResponse {
    vectors: Vec<Vec<f64>>,
}

/// Embedder built from a validated [`EmbedderConfig`].
#[derive(Clone)]
pub struct Embedder {
    config: EmbedderConfig,
    remote: Option<(String, ureq::Agent)>,
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedder")
            .field("config", &self.config)
            .field("endpoint", &self.remote.as_ref().map(|(url, _)| url))
            .finish()
    }
}

impl Embedder {
    pub fn new(config: EmbedderConfig) -> Result<Self> {
        config.validate()?;
        let remote = match config.mode {
            EmbedMode::Deterministic => None,
            EmbedMode::Remote => {
                let url = config.resolved_endpoint().expect("validated above");
                let agent: ureq::Agent = ureq::Agent::config_builder()
                    .timeout_global(Some(Duration::from_secs(30)))
                    .build()
                    .into();
                Some((url, agent))
            }
        };
        Ok(Self { config, remote })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn embed(&self, text: &str) -> Result<Embedding> {
        match &self.remote {
            None => Ok(hash_embed(text, self.config.dim, self.config.seed)),
            Some(_) => Ok(self
                .embed_batch(&[text])?
                .pop()
                .expect("batch of one yields one vector")),
        }
    }

    /// Embeds several texts; remote mode sends them in a single request.
    pub fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        let Some((url, agent)) = &self.remote else {
            return Ok(texts
                .iter()
                .map(|t| hash_embed(t, self.config.dim, self.config.seed))
                .collect());
        };
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let response: RemoteResponse = agent
            .post(url)
            .send_json(&RemoteRequest { texts })
            .map_err(|e| EmbedError::Transport(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::Malformed(e.to_string()))?;
        if response.vectors.len() != texts.len() {
            return Err(EmbedError::Malformed(format!(
                "expected {} vectors, got {}",
                texts.len(),
                response.vectors.len()
            ))
            .into());
        }
        response
            .vectors
            .into_iter()
            .map(|values| {
                if values.len() != self.config.dim {
                    return Err(EmbedError::Malformed(format!(
                        "expected dimension {}, got {}",
                        self.config.dim,
                        values.len()
                    ))
                    .into());
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(EmbedError::Malformed("non-finite component".into()).into());
                }
                Ok(Embedding { values }.normalized())
            })
            .collect()
    }
}
