use std::path::PathBuf;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint {path} is corrupt: {reason}")]
    CheckpointCorrupt { path: PathBuf, reason: String },
    #[error("embedding dimensions differ: {expected} vs {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("backend returned a zero or non-finite embedding")]
    ZeroVector,
    #[error("no texts to embed")]
    EmptyInput,
    #[error("malformed backend response: {0}")]
    BadResponse(String),
    #[error(transparent)]
    Prompt(#[from] revclean_core::prompting::PromptError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

/// A chat and embedding provider.
pub trait Backend: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError>;

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError>;

    /// Requests issued so far, counting every attempt.
    fn requests(&self) -> usize;
}
