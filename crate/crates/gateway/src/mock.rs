use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use revclean_core::bleu::{tokenize, StopwordMode, Stopwords};

use crate::{Backend, ChatRequest, GatewayError};

pub const DEFAULT_EMBED_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    /// Substring of the user message that selects this rule.
    pub contains: String,
    pub response: String,
}

/// File form of a mock backend.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockSpec {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub default: String,
}

/// Deterministic backend: the first rule whose substring occurs in the user
/// message answers, otherwise the default. Embeddings are feature-hashed
/// token counts.
pub struct MockBackend {
    spec: MockSpec,
    dim: usize,
    stopwords: Stopwords,
    requests: AtomicUsize,
}

impl MockBackend {
    pub fn new(spec: MockSpec) -> Self {
        MockBackend {
            spec,
            dim: DEFAULT_EMBED_DIM,
            stopwords: Stopwords::default(),
            requests: AtomicUsize::new(0),
        }
    }

    pub fn from_rules<I, A, B>(rules: I, default: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        MockBackend::new(MockSpec {
            rules: rules
                .into_iter()
                .map(|(c, r)| MockRule {
                    contains: c.into(),
                    response: r.into(),
                })
                .collect(),
            default: default.into(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(MockBackend::new(serde_json::from_str(text)?))
    }

    pub fn with_embedding_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    pub fn respond(&self, user: &str) -> &str {
        self.spec
            .rules
            .iter()
            .find(|r| user.contains(&r.contains))
            .map_or(self.spec.default.as_str(), |r| r.response.as_str())
    }
}

/// Signed feature hashing of lowercased word tokens into `dim` buckets.
pub fn hashing_embedding(text: &str, dim: usize, stopwords: &Stopwords) -> Vec<f64> {
    let mut tokens = tokenize(text, StopwordMode::DropStopwords, stopwords).tokens;
    tokens.retain(|t| t.chars().any(char::is_alphanumeric));
    if tokens.is_empty() {
        tokens.push("<empty>".into());
    }
    let mut v = vec![0.0; dim];
    for t in tokens {
        let h = Sha256::digest(t.as_bytes());
        let idx = u64::from_le_bytes(h[..8].try_into().expect("digest is 32 bytes")) as usize % dim;
        let sign = if h[8] & 1 == 0 { 1.0 } else { -1.0 };
        v[idx] += sign;
    }
    v
}

impl Backend for MockBackend {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        Ok(self.respond(&request.user).to_string())
    }

    fn embed(&self, _model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        Ok(texts
            .iter()
            .map(|t| hashing_embedding(t, self.dim, &self.stopwords))
            .collect())
    }

    fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}
