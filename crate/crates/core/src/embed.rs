//! Text-embedding gateway: cosine similarity, an OpenAI-compatible HTTP
//! client, and a deterministic mock embedder.
//!
//! The mock maps each text to the unit sphere as
//! `normalize(c·e0 + normalize(Σ hash_vec(token)))` where tokens are
//! lowercased alphanumeric runs and `hash_vec` is a seeded unit vector living
//! in the coordinates orthogonal to `e0`. Texts with no tokens collapse onto
//! the shared direction `e0` itself. The shared component makes every pair of
//! texts moderately similar — and degenerate punctuation-only answers
//! *maximally* so (cos = c/√(c²+1) ≈ 0.832 with the default c = 1.5) — which
//! reproduces the known failure mode of anisotropic embedding models that
//! ungated similarity rewards get exploited by. Identical token bags embed to
//! identical vectors, so paraphrase-style tests pin exact fixture values
//! instead of making semantic claims.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{self, TransportError};
use crate::util::{fnv1a64, splitmix64};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding input must be non-empty")]
    EmptyInput,
    #[error("embedding vector must be non-empty with finite values")]
    InvalidVector,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine similarity undefined for zero-norm vector")]
    ZeroNorm,
    #[error("embedding endpoint unavailable after {attempts} attempts: {source}")]
    Unavailable {
        attempts: u32,
        source: TransportError,
    },
    #[error("embedding fixture error: {0}")]
    Fixture(String),
}

/// Fixed-length real vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::InvalidVector);
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `dot(a,b) / (‖a‖·‖b‖)`, clamped to [-1, 1] against rounding.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroNorm);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub trait EmbeddingGateway: Send + Sync {
    /// One vector per input text, order-preserving, uniform dimension.
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError>;
}

/// Optional fixture for the mock embedder: overrides for the sphere-map
/// parameters plus vectors pinned per exact text.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EmbedFixture {
    pub dim: Option<usize>,
    pub seed: Option<u64>,
    pub common_weight: Option<f64>,
    #[serde(default)]
    pub pinned: HashMap<String, Vec<f64>>,
}

/// Deterministic seeded hash-to-sphere embedder.
pub struct MockEmbedder {
    dim: usize,
    seed: u64,
    common_weight: f64,
    pinned: HashMap<String, Vec<f64>>,
    token_cache: Mutex<HashMap<String, Vec<f64>>>,
    calls: AtomicUsize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new(256, 42, 1.5)
    }
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64, common_weight: f64) -> Self {
        assert!(dim >= 2, "mock embedder needs dim >= 2");
        MockEmbedder {
            dim,
            seed,
            common_weight,
            pinned: HashMap::new(),
            token_cache: Mutex::new(HashMap::new()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_fixture_file(path: &Path) -> Result<Self, EmbedError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EmbedError::Fixture(format!("{}: {e}", path.display())))?;
        let fixture: EmbedFixture =
            serde_json::from_str(&text).map_err(|e| EmbedError::Fixture(e.to_string()))?;
        Ok(Self::from_fixture(fixture))
    }

    pub fn from_fixture(fixture: EmbedFixture) -> Self {
        let mut mock = Self::new(
            fixture.dim.unwrap_or(256),
            fixture.seed.unwrap_or(42),
            fixture.common_weight.unwrap_or(1.5),
        );
        mock.pinned = fixture.pinned;
        mock
    }

    /// Pin an exact vector for a text (length must equal `dim`).
    pub fn pin(&mut self, text: impl Into<String>, vector: Vec<f64>) -> &mut Self {
        assert_eq!(
            vector.len(),
            self.dim,
            "pinned vector length must match dim"
        );
        self.pinned.insert(text.into(), vector);
        self
    }

    /// Number of `embed_texts` calls served so far.
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        if let Some(v) = self.token_cache.lock().unwrap().get(token) {
            return v.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ fnv1a64(token.as_bytes())));
        let mut v = vec![0.0; self.dim];
        for slot in v.iter_mut().skip(1) {
            *slot = StandardNormal.sample(&mut rng);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for slot in v.iter_mut() {
            *slot /= norm;
        }
        self.token_cache
            .lock()
            .unwrap()
            .insert(token.to_string(), v.clone());
        v
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        if let Some(v) = self.pinned.get(text) {
            return v.clone();
        }
        let tokens = tokenize(text);
        let mut v = vec![0.0; self.dim];
        v[0] = self.common_weight;
        if !tokens.is_empty() {
            let mut bag = vec![0.0; self.dim];
            for token in &tokens {
                for (acc, x) in bag.iter_mut().zip(self.token_vector(token)) {
                    *acc += x;
                }
            }
            let norm = bag.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (slot, x) in v.iter_mut().zip(bag) {
                    *slot += x / norm;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for slot in v.iter_mut() {
            *slot /= norm;
        }
        v
    }
}

impl EmbeddingGateway for MockEmbedder {
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        texts
            .iter()
            .map(|t| EmbeddingVector::new(self.embed_one(t)))
            .collect()
    }
}

fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Configuration for the HTTP embeddings endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingEndpointConfig {
    pub base_url: String,
    pub model_name: String,
    pub max_retries: u32,
    pub timeout_secs: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    pub max_in_flight: usize,
}

impl Default for EmbeddingEndpointConfig {
    fn default() -> Self {
        EmbeddingEndpointConfig {
            base_url: "http://127.0.0.1:8001/v1".to_string(),
            model_name: "mock-embed".to_string(),
            max_retries: 2,
            timeout_secs: 60,
            api_key: None,
            max_in_flight: 4,
        }
    }
}

/// Client for an OpenAI-compatible `/embeddings` endpoint.
pub struct HttpEmbedder {
    cfg: EmbeddingEndpointConfig,
    client: reqwest::blocking::Client,
    limiter: net::InFlightLimiter,
}

impl HttpEmbedder {
    pub fn new(cfg: EmbeddingEndpointConfig) -> Result<Self, EmbedError> {
        let client =
            net::build_client(cfg.timeout_secs).map_err(|source| EmbedError::Unavailable {
                attempts: 0,
                source,
            })?;
        let limiter = net::InFlightLimiter::new(cfg.max_in_flight);
        Ok(HttpEmbedder {
            cfg,
            client,
            limiter,
        })
    }

    fn request_once(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, TransportError> {
        let _slot = self.limiter.acquire();
        let body = serde_json::json!({
            "model": self.cfg.model_name,
            "input": texts,
        });
        let url = format!("{}/embeddings", self.cfg.base_url.trim_end_matches('/'));
        let value = net::post_json(&self.client, &url, self.cfg.api_key.as_deref(), &body)?;
        let data = value
            .get("data")
            .and_then(|d| d.as_array())
            .ok_or(TransportError::MissingField("data"))?;
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item
                .get("index")
                .and_then(|i| i.as_u64())
                .map(|i| i as usize)
                .unwrap_or(pos);
            let vector = item
                .get("embedding")
                .and_then(|e| e.as_array())
                .ok_or(TransportError::MissingField("embedding"))?
                .iter()
                .map(|v| v.as_f64().ok_or(TransportError::MissingField("embedding")))
                .collect::<Result<Vec<f64>, _>>()?;
            rows.push((index, vector));
        }
        rows.sort_by_key(|(index, _)| *index);
        rows.into_iter()
            .map(|(_, v)| {
                EmbeddingVector::new(v).map_err(|_| TransportError::MissingField("embedding"))
            })
            .collect()
    }
}

impl EmbeddingGateway for HttpEmbedder {
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        let attempts = self.cfg.max_retries + 1;
        let mut last = None;
        for _ in 0..attempts {
            match self.request_once(texts) {
                Ok(vectors) => {
                    if let Some(first) = vectors.first() {
                        for v in &vectors {
                            if v.dim() != first.dim() {
                                return Err(EmbedError::DimensionMismatch {
                                    left: first.dim(),
                                    right: v.dim(),
                                });
                            }
                        }
                    }
                    if vectors.len() != texts.len() {
                        return Err(EmbedError::Fixture(format!(
                            "endpoint returned {} vectors for {} inputs",
                            vectors.len(),
                            texts.len()
                        )));
                    }
                    return Ok(vectors);
                }
                Err(e) => last = Some(e),
            }
        }
        Err(EmbedError::Unavailable {
            attempts,
            source: last.unwrap(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(values: Vec<f64>) -> EmbeddingVector {
        EmbeddingVector::new(values).unwrap()
    }

    #[test]
    fn cosine_basics() {
        let v = unit(vec![0.3, -0.4, 0.5]);
        let neg = unit(v.values().iter().map(|x| -x).collect());
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine_similarity(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
        let e1 = unit(vec![1.0, 0.0, 0.0]);
        let e2 = unit(vec![0.0, 1.0, 0.0]);
        assert_eq!(cosine_similarity(&e1, &e2).unwrap(), 0.0);
    }

    #[test]
    fn cosine_rejects_bad_inputs() {
        let a = unit(vec![1.0, 0.0]);
        let b = unit(vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            cosine_similarity(&a, &b),
            Err(EmbedError::DimensionMismatch { .. })
        ));
        let z = EmbeddingVector(vec![0.0, 0.0]);
        assert!(matches!(
            cosine_similarity(&a, &z),
            Err(EmbedError::ZeroNorm)
        ));
    }

    #[test]
    fn mock_embeddings_are_unit_norm_and_deterministic() {
        let mock = MockEmbedder::default();
        let out = mock
            .embed_texts(&["low perfusion", "low perfusion", ""])
            .unwrap();
        assert_eq!(out[0], out[1]);
        for v in &out {
            assert!((v.norm() - 1.0).abs() < 1e-9);
        }
        let again = MockEmbedder::default()
            .embed_texts(&["low perfusion"])
            .unwrap();
        assert_eq!(out[0], again[0]);
    }

    #[test]
    fn empty_batch_is_an_error() {
        assert!(matches!(
            MockEmbedder::default().embed_texts(&[]),
            Err(EmbedError::EmptyInput)
        ));
    }

    #[test]
    fn degenerate_text_rides_the_common_direction() {
        let mock = MockEmbedder::default();
        let out = mock.embed_texts(&["-", "Renal artery"]).unwrap();
        let cos = cosine_similarity(&out[0], &out[1]).unwrap();
        let expected = 1.5 / (1.5f64 * 1.5 + 1.0).sqrt();
        assert!((cos - expected).abs() < 1e-12, "got {cos}");
        assert!(cos >= 0.8);
    }

    #[test]
    fn unrelated_answers_stay_below_threshold() {
        let mock = MockEmbedder::default();
        let pairs = [
            ("larger", "smaller"),
            ("hepatic cyst", "renal artery"),
            ("bowel obstruction", "optic tract"),
        ];
        for (a, b) in pairs {
            let out = mock.embed_texts(&[a, b]).unwrap();
            let cos = cosine_similarity(&out[0], &out[1]).unwrap();
            assert!(cos < 0.8, "{a} vs {b} gave {cos}");
        }
    }

    #[test]
    fn identical_token_bags_embed_identically() {
        let mock = MockEmbedder::default();
        let out = mock
            .embed_texts(&["Optic Tract", "optic   tract!"])
            .unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn pinned_vectors_override_hashing() {
        let mut mock = MockEmbedder::new(4, 1, 1.5);
        mock.pin("a", vec![1.0, 0.0, 0.0, 0.0]);
        mock.pin("b", vec![0.79, (1.0f64 - 0.79 * 0.79).sqrt(), 0.0, 0.0]);
        let out = mock.embed_texts(&["a", "b"]).unwrap();
        let cos = cosine_similarity(&out[0], &out[1]).unwrap();
        assert!((cos - 0.79).abs() < 1e-12);
        assert!(cos < 0.8);
    }

    proptest! {
        #[test]
        fn cosine_symmetry_and_scale_invariance(
            a in proptest::collection::vec(-5.0f64..5.0, 4),
            b in proptest::collection::vec(-5.0f64..5.0, 4),
            c in 0.01f64..100.0,
        ) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-6));
            prop_assume!(b.iter().any(|x| x.abs() > 1e-6));
            let va = unit(a.clone());
            let vb = unit(b);
            let ab = cosine_similarity(&va, &vb).unwrap();
            let ba = cosine_similarity(&vb, &va).unwrap();
            prop_assert_eq!(ab, ba);
            let scaled = unit(a.iter().map(|x| c * x).collect());
            let sab = cosine_similarity(&scaled, &vb).unwrap();
            prop_assert!((sab - ab).abs() < 1e-12);
        }
    }
}
