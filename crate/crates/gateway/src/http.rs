use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use crate::{Backend, ChatRequest, GatewayError, ModelConfig};

/// OpenAI-compatible client for `/chat/completions` and `/embeddings`.
pub struct HttpBackend {
    agent: ureq::Agent,
    config: ModelConfig,
    api_key: Option<String>,
    trace: bool,
    requests: AtomicUsize,
    jitter: Mutex<StdRng>,
}

enum Attempt {
    Done(Value),
    Retry(String),
    Fatal(GatewayError),
}

impl HttpBackend {
    /// Reads the API key from the variable named in `config`. A missing
    /// key is allowed for local endpoints that need none.
    pub fn new(config: ModelConfig, trace: bool) -> Result<Self, GatewayError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!("{} is not set; sending requests without authorization", config.api_key_env);
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpBackend {
            agent,
            config,
            api_key,
            trace,
            requests: AtomicUsize::new(0),
            jitter: Mutex::new(StdRng::seed_from_u64(0x5eed)),
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    fn redact(&self, text: &str) -> String {
        match &self.api_key {
            Some(k) => text.replace(k.as_str(), "[REDACTED]"),
            None => text.to_string(),
        }
    }

    fn attempt(&self, url: &str, body: &Value) -> Attempt {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        if self.trace {
            log::info!("POST {url} {}", self.redact(&body.to_string()));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(self.redact(&e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if self.trace {
            log::info!("{status} {}", self.redact(&text));
        }
        match status {
            200..=299 => match serde_json::from_str(&text) {
                Ok(v) => Attempt::Done(v),
                Err(e) => Attempt::Fatal(GatewayError::BadResponse(e.to_string())),
            },
            429 | 500..=599 => Attempt::Retry(format!("HTTP {status}")),
            _ => Attempt::Fatal(GatewayError::Http {
                status,
                body: self.redact(&text),
            }),
        }
    }

    /// Posts `body`, retrying connection failures, 429 and 5xx with
    /// exponential backoff and jitter.
    fn post(&self, path: &str, body: Value) -> Result<Value, GatewayError> {
        let url = self.url(path);
        let policy = &self.config.retry;
        let mut last = String::new();
        for attempt in 1..=policy.max_attempts {
            match self.attempt(&url, &body) {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg) => last = msg,
            }
            if attempt < policy.max_attempts {
                let jitter = self.jitter.lock().expect("jitter lock").random_range(0.5..1.5);
                let delay = policy.delay(attempt, jitter);
                log::debug!("retrying {url} in {delay:?} after: {last}");
                thread::sleep(delay);
            }
        }
        Err(GatewayError::Transport {
            attempts: policy.max_attempts,
            message: last,
        })
    }
}

impl Backend for HttpBackend {
    fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let body = json!({
            "model": request.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let v = self.post("chat/completions", body)?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| GatewayError::BadResponse("missing choices[0].message.content".into()))
    }

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let v = self.post("embeddings", json!({ "model": model, "input": texts }))?;
        let data = v
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::BadResponse("missing data array".into()))?;
        if data.len() != texts.len() {
            return Err(GatewayError::BadResponse(format!(
                "{} embeddings for {} inputs",
                data.len(),
                texts.len()
            )));
        }
        let mut out = vec![Vec::new(); texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let vec = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| GatewayError::BadResponse("missing embedding".into()))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| GatewayError::BadResponse("non-numeric embedding".into())))
                .collect::<Result<Vec<f64>, _>>()?;
            let slot = out
                .get_mut(index)
                .ok_or_else(|| GatewayError::BadResponse(format!("embedding index {index} out of range")))?;
            *slot = vec;
        }
        Ok(out)
    }

    fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}
