use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::GatewayError;

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    value: String,
}

/// Key-value store for raw responses, optionally backed by an append-only
/// JSON-lines log that is replayed on open.
#[derive(Default)]
pub struct ResponseCache {
    map: RwLock<HashMap<String, String>>,
    log: Option<Mutex<File>>,
    path: Option<PathBuf>,
    inflight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache::default()
    }

    /// Opens or creates the log at `path`. A torn final line (from an
    /// interrupted write) is dropped; other malformed lines are an error.
    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        let mut map = HashMap::new();
        let mut needs_newline = false;
        if path.exists() {
            let content = std::fs::read_to_string(path)?;
            let lines: Vec<&str> = content.lines().collect();
            let last = lines.len();
            let mut good_bytes = 0u64;
            for (i, line) in lines.iter().enumerate() {
                if !line.trim().is_empty() {
                    match serde_json::from_str::<Entry>(line) {
                        Ok(e) => {
                            map.insert(e.key, e.value);
                        }
                        Err(_) if i + 1 == last && !content.ends_with('\n') => {
                            log::warn!("dropping torn final cache entry in {}", path.display());
                            OpenOptions::new().write(true).open(path)?.set_len(good_bytes)?;
                            break;
                        }
                        Err(e) => {
                            return Err(GatewayError::BadResponse(format!(
                                "cache {} line {}: {e}",
                                path.display(),
                                i + 1
                            )))
                        }
                    }
                }
                good_bytes += line.len() as u64 + 1;
                needs_newline = i + 1 == last && !content.ends_with('\n');
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if needs_newline {
            writeln!(file)?;
        }
        Ok(ResponseCache {
            map: RwLock::new(map),
            log: Some(Mutex::new(file)),
            path: Some(path.to_path_buf()),
            inflight: Mutex::new(HashMap::new()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.map.read().expect("cache lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn store(&self, key: &str, value: &str) -> Result<(), GatewayError> {
        if let Some(log) = &self.log {
            let line = serde_json::to_string(&Entry {
                key: key.to_string(),
                value: value.to_string(),
            })
            .expect("strings serialize");
            let mut f = log.lock().expect("cache log lock");
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        self.map
            .write()
            .expect("cache lock")
            .insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Lock held while a key is being fetched so concurrent callers with the
    /// same key wait instead of issuing a second request.
    pub(crate) fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.inflight
            .lock()
            .expect("inflight lock")
            .entry(key.to_string())
            .or_default()
            .clone()
    }
}
