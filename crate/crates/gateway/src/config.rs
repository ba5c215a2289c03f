use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            backoff_base_ms: 1000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based): base · 2^(attempt−1),
    /// scaled by a jitter factor in [0.5, 1.5).
    pub fn delay(&self, attempt: u32, jitter: f64) -> Duration {
        let exp = self.backoff_base_ms.saturating_mul(1u64 << (attempt - 1).min(20));
        Duration::from_millis((exp as f64 * jitter) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub endpoint: String,
    pub model: String,
    pub embedding_model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo-0125".into(),
            embedding_model: "text-embedding-3-small".into(),
            temperature: 0.1,
            max_tokens: 256,
            timeout_secs: 60,
            retry: RetryPolicy::default(),
            api_key_env: "LLM_API_KEY".into(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidConfig(format!(
                "temperature must be a finite value ≥ 0, got {}",
                self.temperature
            )));
        }
        if self.retry.max_attempts == 0 {
            return Err(GatewayError::InvalidConfig("retry.max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}
