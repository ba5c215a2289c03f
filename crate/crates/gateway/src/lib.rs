//! Model access for the cleaning pipeline: chat classification and text
//! embeddings over an OpenAI-compatible HTTP API, with a deterministic
//! mock backend, an append-only response cache and resumable batches.

mod backend;
mod cache;
mod classify;
mod config;
mod http;
mod mock;

pub use backend::{Backend, ChatRequest, GatewayError};
pub use cache::ResponseCache;
pub use classify::{BatchOptions, BatchOutcome, Gateway};
pub use config::{ModelConfig, RetryPolicy};
pub use http::HttpBackend;
pub use mock::{hashing_embedding, MockBackend, MockRule, MockSpec, DEFAULT_EMBED_DIM};
