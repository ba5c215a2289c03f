use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use revclean_core::hashing::stable_hash;
use revclean_core::prompting::{parse_label_response, render_prompt, PromptConfig, RenderedPrompt};
use revclean_core::{Dataset, Prediction, ReviewInstance};

use crate::{Backend, ChatRequest, GatewayError, ModelConfig, ResponseCache};

/// Options for [`Gateway::classify_batch`].
#[derive(Debug, Clone, Default)]
pub struct BatchOptions {
    pub parallelism: usize,
    pub checkpoint: Option<PathBuf>,
    /// Stop after this many newly completed instances (simulates an
    /// interrupted run).
    pub stop_after: Option<usize>,
}

#[derive(Debug)]
pub struct BatchOutcome {
    /// In dataset order. Shorter than the dataset only when `stop_after`
    /// cut the run short.
    pub predictions: Vec<Prediction>,
    pub resumed: usize,
    pub completed_now: usize,
    pub complete: bool,
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    cache: ResponseCache,
    config: ModelConfig,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, cache: ResponseCache, config: ModelConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(Gateway { backend, cache, config })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn requests(&self) -> usize {
        self.backend.requests()
    }

    fn chat_key(&self, prompt: &RenderedPrompt) -> String {
        stable_hash([
            self.config.model.as_bytes(),
            prompt.system_text.as_bytes(),
            prompt.user_text.as_bytes(),
            &self.config.temperature.to_bits().to_le_bytes(),
        ])
    }

    /// Classifies one instance. Cached responses are reused without a
    /// request; otherwise unparsable responses are retried up to the
    /// configured attempt count and the last one is kept.
    pub fn classify_one(&self, instance: &ReviewInstance, prompt: &PromptConfig) -> Result<Prediction, GatewayError> {
        let started = Instant::now();
        let rendered = render_prompt(instance, prompt);
        let key = self.chat_key(&rendered);
        let lock = self.cache.key_lock(&key);
        let _guard = lock.lock().expect("key lock");

        let make = |raw: String, from_cache: bool| {
            let parsed = parse_label_response(&raw);
            Prediction {
                id: instance.id.clone(),
                label: parsed.as_ref().ok().copied(),
                error: parsed.err().map(|e| e.to_string()),
                raw_response: raw,
                model: self.config.model.clone(),
                prompt_variant: prompt.variant_name(),
                prompt_fingerprint: rendered.fingerprint.clone(),
                latency_ms: started.elapsed().as_millis() as u64,
                from_cache,
            }
        };

        if let Some(raw) = self.cache.get(&key) {
            return Ok(make(raw, true));
        }

        let request = ChatRequest {
            model: self.config.model.clone(),
            system: rendered.system_text.clone(),
            user: rendered.user_text.clone(),
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
        };
        let mut raw = String::new();
        for attempt in 1..=self.config.retry.max_attempts {
            raw = self.backend.chat(&request)?;
            if parse_label_response(&raw).is_ok() {
                break;
            }
            log::debug!("unparsable response for {} (attempt {attempt})", instance.id);
        }
        self.cache.store(&key, &raw)?;
        Ok(make(raw, false))
    }

    /// Classifies every instance with up to `parallelism` requests in
    /// flight. With a checkpoint, each completion is appended as it
    /// happens and instances already in the checkpoint are not requested.
    pub fn classify_batch(
        &self,
        dataset: &Dataset,
        prompt: &PromptConfig,
        options: &BatchOptions,
    ) -> Result<BatchOutcome, GatewayError> {
        prompt.validate()?;
        let parallelism = options.parallelism.max(1);
        let mut done: HashMap<String, Prediction> = match &options.checkpoint {
            Some(p) => load_checkpoint(p, dataset, prompt, &self.config.model)?,
            None => HashMap::new(),
        };
        let resumed = done.len();
        let pending: Vec<&ReviewInstance> = dataset.iter().filter(|i| !done.contains_key(&i.id)).collect();
        let limit = options.stop_after.unwrap_or(usize::MAX).min(pending.len());

        let writer: Option<Mutex<BufWriter<File>>> = match &options.checkpoint {
            Some(p) => Some(Mutex::new(BufWriter::new(
                OpenOptions::new().create(true).append(true).open(p)?,
            ))),
            None => None,
        };
        let next = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let results: Mutex<Vec<Prediction>> = Mutex::new(Vec::with_capacity(limit));
        let failure: Mutex<Option<GatewayError>> = Mutex::new(None);

        std::thread::scope(|scope| {
            for _ in 0..parallelism.min(limit.max(1)) {
                scope.spawn(|| loop {
                    if abort.load(Ordering::SeqCst) {
                        return;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= limit {
                        return;
                    }
                    let outcome = self.classify_one(pending[i], prompt).and_then(|p| {
                        if let Some(w) = &writer {
                            let mut w = w.lock().expect("checkpoint lock");
                            writeln!(w, "{}", serde_json::to_string(&p).expect("prediction serializes"))?;
                            w.flush()?;
                        }
                        Ok(p)
                    });
                    match outcome {
                        Ok(p) => results.lock().expect("results lock").push(p),
                        Err(e) => {
                            abort.store(true, Ordering::SeqCst);
                            failure.lock().expect("failure lock").get_or_insert(e);
                            return;
                        }
                    }
                });
            }
        });

        if let Some(e) = failure.into_inner().expect("failure lock") {
            return Err(e);
        }
        let fresh = results.into_inner().expect("results lock");
        let completed_now = fresh.len();
        done.extend(fresh.into_iter().map(|p| (p.id.clone(), p)));
        let predictions: Vec<Prediction> = dataset.iter().filter_map(|i| done.remove(&i.id)).collect();
        Ok(BatchOutcome {
            complete: predictions.len() == dataset.len(),
            predictions,
            resumed,
            completed_now,
        })
    }

    /// Unit-length embeddings, one per text, cached per text.
    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::EmptyInput);
        }
        let model = &self.config.embedding_model;
        let keys: Vec<String> = texts
            .iter()
            .map(|t| stable_hash([b"embedding".as_slice(), model.as_bytes(), t.as_bytes()]))
            .collect();

        let mut out: Vec<Option<Vec<f64>>> = keys
            .iter()
            .map(|k| self.cache.get(k).and_then(|v| serde_json::from_str(&v).ok()))
            .collect();
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        let mut seen = HashSet::new();
        let unique: Vec<usize> = missing.iter().copied().filter(|&i| seen.insert(&keys[i])).collect();
        for chunk in unique.chunks(64) {
            let batch: Vec<String> = chunk.iter().map(|&i| texts[i].clone()).collect();
            let vectors = self.backend.embed(model, &batch)?;
            if vectors.len() != batch.len() {
                return Err(GatewayError::BadResponse(format!(
                    "{} embeddings for {} inputs",
                    vectors.len(),
                    batch.len()
                )));
            }
            for (&i, v) in chunk.iter().zip(vectors) {
                let v = normalize(v)?;
                self.cache
                    .store(&keys[i], &serde_json::to_string(&v).expect("vector serializes"))?;
                out[i] = Some(v);
            }
        }
        for &i in &missing {
            if out[i].is_none() {
                out[i] = self.cache.get(&keys[i]).and_then(|v| serde_json::from_str(&v).ok());
            }
        }

        let out: Vec<Vec<f64>> = out.into_iter().map(|v| v.expect("every text embedded")).collect();
        let dim = out[0].len();
        if let Some(bad) = out.iter().find(|v| v.len() != dim) {
            return Err(GatewayError::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(out)
    }
}

fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>, GatewayError> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(GatewayError::ZeroVector);
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(v)
}

fn corrupt(path: &Path, reason: impl Into<String>) -> GatewayError {
    GatewayError::CheckpointCorrupt {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads completed predictions from a checkpoint. A torn final line is
/// dropped and truncated away; anything else unexpected is corruption.
fn load_checkpoint(
    path: &Path,
    dataset: &Dataset,
    prompt: &PromptConfig,
    model: &str,
) -> Result<HashMap<String, Prediction>, GatewayError> {
    let mut done = HashMap::new();
    if !path.exists() {
        return Ok(done);
    }
    let content = std::fs::read_to_string(path)?;
    let lines: Vec<&str> = content.lines().collect();
    let mut good_bytes = 0u64;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            good_bytes += line.len() as u64 + 1;
            continue;
        }
        let p: Prediction = match serde_json::from_str(line) {
            Ok(p) => p,
            Err(_) if i + 1 == lines.len() && !content.ends_with('\n') => {
                log::warn!("dropping torn final checkpoint line in {}", path.display());
                OpenOptions::new().write(true).open(path)?.set_len(good_bytes)?;
                break;
            }
            Err(e) => return Err(corrupt(path, format!("line {}: {e}", i + 1))),
        };
        let inst = dataset
            .get(&p.id)
            .ok_or_else(|| corrupt(path, format!("line {}: unknown id `{}`", i + 1, p.id)))?;
        let expected = render_prompt(inst, prompt).fingerprint;
        if p.prompt_fingerprint != expected || p.model != model {
            return Err(corrupt(
                path,
                format!("line {}: `{}` was produced with a different prompt or model", i + 1, p.id),
            ));
        }
        if done.insert(p.id.clone(), p).is_some() {
            return Err(corrupt(path, format!("line {}: duplicate id", i + 1)));
        }
        good_bytes += line.len() as u64 + 1;
    }
    if !content.is_empty() && !content.ends_with('\n') && good_bytes as usize > content.len() {
        // last line was complete but unterminated
        OpenOptions::new().append(true).open(path)?.write_all(b"\n")?;
    }
    Ok(done)
}
