//! Cached, retrying, call-counting front end to an [`LlmProvider`].

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::provider::{ChatRequest, LlmProvider};
use super::OracleError;
use crate::ontology::ConceptId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub model_id: String,
    pub temperature: f64,
    pub seed: u64,
    pub confidence_threshold: f64,
    pub endpoint: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            model_id: "mock".into(),
            temperature: 0.3,
            seed: 42,
            confidence_threshold: 8.5,
            endpoint: None,
            timeout_secs: 60,
            max_retries: 3,
            backoff_ms: 250,
            max_in_flight: 4,
        }
    }
}

/// One line of the cache file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key_hash: String,
    pub model_id: String,
    pub prompt_sha256: String,
    pub raw: String,
    pub timestamp: u64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Cache key over everything that determines a reply.
pub fn cache_key(model_id: &str, temperature: f64, seed: u64, prompt: &str) -> String {
    let mut h = Sha256::new();
    for part in [model_id, &temperature.to_string(), &seed.to_string(), prompt] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Append-only response cache. Readers share a lock; appends are serialized.
#[derive(Default)]
pub struct ResponseCache {
    entries: RwLock<HashMap<String, String>>,
    file: Mutex<Option<File>>,
    path: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads existing entries and opens the file for appending. Unreadable
    /// lines (e.g. a torn last write) are skipped.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                if let Ok(e) = serde_json::from_str::<CacheEntry>(&line?) {
                    entries.insert(e.key_hash, e.raw);
                }
            }
        }
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ResponseCache {
            entries: RwLock::new(entries),
            file: Mutex::new(Some(file)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries.read().unwrap().get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: &str, model_id: &str, prompt: &str, raw: &str) -> std::io::Result<()> {
        let mut file = self.file.lock().unwrap();
        if self.entries.read().unwrap().contains_key(key) {
            return Ok(());
        }
        if let Some(f) = file.as_mut() {
            let entry = CacheEntry {
                key_hash: key.to_string(),
                model_id: model_id.to_string(),
                prompt_sha256: sha256_hex(prompt.as_bytes()),
                raw: raw.to_string(),
                timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            };
            let mut line = serde_json::to_string(&entry).expect("cache entry serializes");
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.entries.write().unwrap().insert(key.to_string(), raw.to_string());
        Ok(())
    }
}

/// A prompt plus the pair it is about.
#[derive(Debug, Clone)]
pub struct Query {
    pub prompt: String,
    pub pair: Option<(ConceptId, ConceptId)>,
}

pub struct LlmClient {
    provider: Box<dyn LlmProvider>,
    cfg: OracleConfig,
    cache: ResponseCache,
    network_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl LlmClient {
    pub fn new(provider: Box<dyn LlmProvider>, cfg: OracleConfig, cache: ResponseCache) -> Self {
        LlmClient {
            provider,
            cfg,
            cache,
            network_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Provider invocations so far, retries included.
    pub fn calls_made(&self) -> u64 {
        self.network_calls.load(Ordering::SeqCst)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::SeqCst)
    }

    pub fn query(&self, prompt: &str, pair: Option<(&ConceptId, &ConceptId)>) -> Result<String, OracleError> {
        let key = cache_key(&self.cfg.model_id, self.cfg.temperature, self.cfg.seed, prompt);
        if let Some(raw) = self.cache.get(&key) {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(raw);
        }
        let req = ChatRequest {
            model: &self.cfg.model_id,
            prompt,
            temperature: self.cfg.temperature,
            seed: self.cfg.seed,
            pair,
        };
        let mut attempt = 0u32;
        let raw = loop {
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            match self.provider.complete(&req) {
                Ok(raw) => break raw,
                Err(e) if e.is_retryable() && attempt < self.cfg.max_retries => {
                    let wait = self.cfg.backoff_ms.saturating_mul(1 << attempt.min(10));
                    log::warn!("oracle call failed ({e}), retry {} in {wait} ms", attempt + 1);
                    std::thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                Err(e) => {
                    return Err(OracleError::Provider {
                        attempts: attempt + 1,
                        source: e,
                    })
                }
            }
        };
        self.cache.insert(&key, &self.cfg.model_id, prompt, &raw).map_err(OracleError::Cache)?;
        Ok(raw)
    }

    /// Runs queries with at most `max_in_flight` outstanding provider calls.
    /// Results come back in input order.
    pub fn query_many(&self, queries: &[Query]) -> Vec<Result<String, OracleError>> {
        let workers = self.cfg.max_in_flight.max(1).min(queries.len().max(1));
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<String, OracleError>>>> =
            Mutex::new((0..queries.len()).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(q) = queries.get(i) else { break };
                    let r = self.query(&q.prompt, q.pair.as_ref().map(|(a, b)| (a, b)));
                    results.lock().unwrap()[i] = Some(r);
                });
            }
        });
        results.into_inner().unwrap().into_iter().map(|r| r.expect("every query ran")).collect()
    }
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("cfg", &self.cfg)
            .field("network_calls", &self.calls_made())
            .finish()
    }
}
