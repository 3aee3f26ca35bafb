use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{blocking_client, RetryPolicy};
use crate::textkit::tokenize;

pub const USE_ID: &str = "use";
pub const MPNET_ID: &str = "mpnet";

/// Dimension of [`HashEmbedder`] vectors.
pub const HASH_EMBED_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub provider_id: String,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(provider_id: impl Into<String>, values: Vec<f64>) -> Self {
        Self { provider_id: provider_id.into(), values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding backend unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("embedding backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("embedding protocol violation: {0}")]
    Protocol(String),
    #[error("dimension mismatch: provider declared {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Source of sentence embeddings.
pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;

    /// One vector per text, in input order.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError>;
}

pub fn embed(
    texts: &[String],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    provider.embed(texts)
}

/// Offline stand-in for a sentence encoder.
///
/// Each distinct token gets a pseudo-random direction derived from a seeded
/// FNV-1a hash; a text embeds to the count-weighted sum of its token
/// directions, unit-normalized. Identical token multisets give identical
/// vectors and texts with many shared tokens score high. A text without
/// tokens maps to the zero vector.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    id: String,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(id: impl Into<String>, seed: u64) -> Self {
        Self { id: id.into(), seed }
    }

    pub fn embed_text(&self, text: &str) -> EmbeddingVector {
        let mut acc = vec![0.0f64; HASH_EMBED_DIM];
        for token in tokenize(text) {
            let mut state = fnv1a(token.as_bytes()) ^ self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            for slot in acc.iter_mut() {
                *slot += unit_interval(splitmix64(&mut state)) * 2.0 - 1.0;
            }
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter_mut().for_each(|x| *x /= norm);
        }
        EmbeddingVector::new(self.id.clone(), acc)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_interval(x: u64) -> f64 {
    (x >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    encoder: &'a str,
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

/// Client for a model server speaking the `/embed` protocol.
#[derive(Debug)]
pub struct RemoteEmbedder {
    endpoint: String,
    encoder: String,
    client: reqwest::blocking::Client,
    retry: RetryPolicy,
    batch_size: usize,
    max_concurrent: usize,
    dim: OnceLock<usize>,
}

impl RemoteEmbedder {
    /// `base_url` is the server root; `encoder` is `use` or `mpnet`.
    pub fn new(base_url: &str, encoder: &str) -> Self {
        Self {
            endpoint: format!("{}/embed", base_url.trim_end_matches('/')),
            encoder: encoder.to_string(),
            client: blocking_client(Duration::from_secs(60)),
            retry: RetryPolicy::default(),
            batch_size: 32,
            max_concurrent: 4,
            dim: OnceLock::new(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_batching(mut self, batch_size: usize, max_concurrent: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self.max_concurrent = max_concurrent.max(1);
        self
    }

    /// Pin the dimension the server must report.
    pub fn with_dim(self, dim: usize) -> Self {
        let _ = self.dim.set(dim);
        self
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let body = EmbedRequest { encoder: &self.encoder, texts };
        let mut last_attempt = 0;
        let response = self
            .retry
            .run(
                |attempt| {
                    last_attempt = attempt;
                    let resp = self.client.post(&self.endpoint).json(&body).send()?;
                    let status = resp.status();
                    let text = resp.text()?;
                    Ok((status.as_u16(), text))
                },
                |e: &reqwest::Error| e.is_timeout() || e.is_connect() || e.is_request(),
            )
            .map_err(|e: reqwest::Error| EmbedError::Unavailable {
                attempts: last_attempt,
                message: e.to_string(),
            })?;
        let (status, text) = response;
        if status != 200 {
            return Err(EmbedError::Status { status, body: text });
        }
        let parsed: EmbedResponse =
            serde_json::from_str(&text).map_err(|e| EmbedError::Protocol(e.to_string()))?;
        self.check_response(texts.len(), parsed)
    }

    fn check_response(
        &self,
        expected_len: usize,
        parsed: EmbedResponse,
    ) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if parsed.vectors.len() != expected_len {
            return Err(EmbedError::Protocol(format!(
                "expected {expected_len} vectors, got {}",
                parsed.vectors.len()
            )));
        }
        let dim = *self.dim.get_or_init(|| parsed.dim);
        if parsed.dim != dim || dim == 0 {
            return Err(EmbedError::DimensionMismatch { expected: dim, got: parsed.dim });
        }
        parsed
            .vectors
            .into_iter()
            .map(|values| {
                if values.len() != dim {
                    return Err(EmbedError::DimensionMismatch { expected: dim, got: values.len() });
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(EmbedError::Protocol("non-finite vector entry".into()));
                }
                Ok(EmbeddingVector::new(self.encoder.clone(), values))
            })
            .collect()
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn id(&self) -> &str {
        &self.encoder
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let batches: Vec<&[String]> = texts.chunks(self.batch_size).collect();
        let mut out = Vec::with_capacity(texts.len());
        // each wave runs concurrently; results are stitched back by batch index
        for wave in batches.chunks(self.max_concurrent) {
            let results: Vec<Result<Vec<EmbeddingVector>, EmbedError>> = std::thread::scope(|s| {
                let handles: Vec<_> =
                    wave.iter().map(|batch| s.spawn(move || self.embed_batch(batch))).collect();
                handles.into_iter().map(|h| h.join().expect("embed worker panicked")).collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        Ok(out)
    }
}

/// Named embedding providers, keyed by provider id (`use`, `mpnet`).
#[derive(Default)]
pub struct ProviderSet {
    providers: BTreeMap<String, Box<dyn EmbeddingProvider>>,
}

impl ProviderSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Deterministic offline providers for both encoders.
    pub fn hash(seed: u64) -> Self {
        Self::new()
            .with(HashEmbedder::new(USE_ID, seed))
            .with(HashEmbedder::new(MPNET_ID, seed.wrapping_add(1)))
    }

    /// Remote providers for both encoders against one model server.
    pub fn remote(base_url: &str) -> Self {
        Self::new()
            .with(RemoteEmbedder::new(base_url, USE_ID))
            .with(RemoteEmbedder::new(base_url, MPNET_ID))
    }

    pub fn with(mut self, provider: impl EmbeddingProvider + 'static) -> Self {
        self.providers.insert(provider.id().to_string(), Box::new(provider));
        self
    }

    pub fn get(&self, id: &str) -> Option<&dyn EmbeddingProvider> {
        self.providers.get(id).map(|p| p.as_ref())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.providers.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semgate::cosine;

    #[test]
    fn hash_embedder_is_deterministic() {
        let p = HashEmbedder::new("use", 7);
        let a = p.embed(&["x".to_string()]).unwrap();
        let b = p.embed(&["x".to_string()]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].dim(), HASH_EMBED_DIM);
        let norm: f64 = a[0].values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hash_embedder_ignores_case_and_edge_punctuation() {
        let p = HashEmbedder::new("use", 7);
        assert_eq!(p.embed_text("Buffer overflow."), p.embed_text("buffer OVERFLOW"));
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let v = HashEmbedder::new("use", 1).embed_text("  ");
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn seeds_give_different_spaces() {
        let a = HashEmbedder::new("use", 1).embed_text("heap overflow");
        let b = HashEmbedder::new("use", 2).embed_text("heap overflow");
        assert_ne!(a.values, b.values);
    }

    #[test]
    fn shared_vocabulary_raises_similarity() {
        let p = HashEmbedder::new("use", 3);
        let d = p.embed_text("sql injection in the login form allows remote attackers to read data");
        let near = p.embed_text("the login form is vulnerable to sql injection by remote attackers");
        let far = p.embed_text("kernel race condition during mount leads to privilege escalation");
        assert!(cosine(&d, &near).unwrap() > cosine(&d, &far).unwrap());
    }

    #[test]
    fn provider_set_lookup() {
        let set = ProviderSet::hash(5);
        assert_eq!(set.ids().collect::<Vec<_>>(), vec!["mpnet", "use"]);
        assert!(set.get("use").is_some());
        assert!(set.get("bert").is_none());
    }
}
