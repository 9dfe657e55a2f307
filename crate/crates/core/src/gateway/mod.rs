//! Provider-agnostic completions with caching, retries, a bounded number of
//! in-flight requests and a JSON-lines run manifest.

mod backend;
mod cache;
pub mod template;

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    Backend, BackendResponse, MockBackend, MockRule, OpenAiBackend, DEFAULT_CHAT_PATH,
};
pub use cache::{CacheEntry, CacheKey, ResponseCache};
pub use template::{
    builtin_template, render_default, render_prompt, resolve_template, Exemplar, PromptTemplate,
    TaskKind, TemplateError,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Free-form label carried into the manifest; not part of the cache key.
    #[serde(default)]
    pub request_tag: String,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty prompt".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default)]
    pub prompt_tokens: Option<u64>,
    #[serde(default)]
    pub completion_tokens: Option<u64>,
    #[serde(default)]
    pub total_tokens: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub usage: Option<Usage>,
    pub cached: bool,
    /// Network attempts made; 0 for cache hits.
    pub attempts: u32,
    pub cache_key: CacheKey,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    /// The prompt does not fit the model; callers may re-chunk and retry.
    #[error("context length exceeded for {model_id}: {message}")]
    ContextLength { model_id: String, message: String },
    /// Non-retryable provider rejection, payload verbatim.
    #[error("provider error (HTTP {status}): {body}")]
    Provider { status: u16, body: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("undecodable provider response: {0}")]
    Decode(String),
    #[error("cache or manifest I/O: {0}")]
    Io(#[from] io::Error),
}

/// One manifest line per completion, hit or miss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub timestamp: String,
    pub cache_key: CacheKey,
    pub model_id: String,
    pub unit_id: String,
    pub cached: bool,
    pub attempts: u32,
    pub usage: Option<Usage>,
    #[serde(default)]
    pub request_tag: String,
}

/// Append-only JSON-lines writer, safe to share across threads.
pub struct Manifest {
    file: Mutex<File>,
}

impl Manifest {
    /// Starts a fresh manifest, truncating any previous one.
    pub fn create(path: &Path) -> io::Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self {
            file: Mutex::new(File::create(path)?),
        })
    }

    pub fn append_to(path: &Path) -> io::Result<Self> {
        Ok(Self {
            file: Mutex::new(OpenOptions::new().create(true).append(true).open(path)?),
        })
    }

    pub fn record(&self, row: &ManifestRow) -> io::Result<()> {
        let mut line = serde_json::to_string(row).expect("manifest row serializes");
        line.push('\n');
        let mut f = self.file.lock().expect("manifest lock");
        f.write_all(line.as_bytes())?;
        f.flush()
    }
}

/// Counting semaphore bounding concurrent backend calls.
struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("semaphore lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("semaphore wait");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore lock") += 1;
        self.0.cv.notify_one();
    }
}

/// Shared entry point for all completions in a run.
pub struct Gateway {
    cache: Option<ResponseCache>,
    manifest: Option<Manifest>,
    slots: Semaphore,
    key_locks: Mutex<HashMap<CacheKey, Arc<Mutex<()>>>>,
}

impl Gateway {
    pub fn new(
        cache: Option<ResponseCache>,
        manifest: Option<Manifest>,
        max_in_flight: usize,
    ) -> Self {
        Self {
            cache,
            manifest,
            slots: Semaphore::new(max_in_flight),
            key_locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    /// Returns the cached answer when present; otherwise calls `backend`,
    /// stores the answer and returns it. Concurrent calls for one key wait
    /// on each other so only the first reaches the backend. Failures leave
    /// no cache entry and no manifest row.
    pub fn complete(
        &self,
        backend: &dyn Backend,
        request: &CompletionRequest,
        unit_id: &str,
    ) -> Result<CompletionResult, GatewayError> {
        request.validate()?;
        let key = CacheKey::of(request);
        let key_lock = {
            let mut locks = self.key_locks.lock().expect("key lock table");
            locks.entry(key.clone()).or_default().clone()
        };
        let _guard = key_lock.lock().expect("key lock");

        let result = match self.cache.as_ref().and_then(|c| c.get(&key)) {
            Some(hit) => CompletionResult {
                text: hit.text,
                usage: hit.usage,
                cached: true,
                attempts: 0,
                cache_key: key,
            },
            None => {
                let resp = {
                    let _permit = self.slots.acquire();
                    backend.complete(request)?
                };
                if let Some(cache) = &self.cache {
                    cache.put(&CacheEntry {
                        cache_key: key.clone(),
                        model_id: request.model_id.clone(),
                        temperature: request.temperature,
                        max_output_tokens: request.max_output_tokens,
                        prompt: request.prompt.clone(),
                        text: resp.text.clone(),
                        usage: resp.usage.clone(),
                    })?;
                }
                CompletionResult {
                    text: resp.text,
                    usage: resp.usage,
                    cached: false,
                    attempts: resp.attempts,
                    cache_key: key,
                }
            }
        };
        if let Some(manifest) = &self.manifest {
            manifest.record(&ManifestRow {
                timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
                cache_key: result.cache_key.clone(),
                model_id: request.model_id.clone(),
                unit_id: unit_id.to_string(),
                cached: result.cached,
                attempts: result.attempts,
                usage: result.usage.clone(),
                request_tag: request.request_tag.clone(),
            })?;
        }
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::thread;
    use std::time::Duration;

    fn req(prompt: &str) -> CompletionRequest {
        CompletionRequest {
            model_id: "m".into(),
            prompt: prompt.into(),
            temperature: 0.0,
            max_output_tokens: 64,
            request_tag: "t".into(),
        }
    }

    #[test]
    fn cache_hit_on_second_call() {
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = dir.path().join("manifest.jsonl");
        let gw = Gateway::new(
            Some(ResponseCache::new(dir.path().join("cache"))),
            Some(Manifest::create(&manifest_path).unwrap()),
            2,
        );
        let mock = MockBackend::new().with_response("prompt", "A");
        let first = gw.complete(&mock, &req("prompt"), "u1").unwrap();
        let second = gw.complete(&mock, &req("prompt"), "u1").unwrap();
        assert_eq!(
            (first.text.as_str(), first.cached, first.attempts),
            ("A", false, 1)
        );
        assert_eq!(
            (second.text.as_str(), second.cached, second.attempts),
            ("A", true, 0)
        );
        assert_eq!(mock.calls(), 1);
        let rows: Vec<ManifestRow> = std::fs::read_to_string(&manifest_path)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(
            rows.iter().map(|r| r.cached).collect::<Vec<_>>(),
            [false, true]
        );
        assert!(rows
            .iter()
            .all(|r| r.unit_id == "u1" && r.cache_key == first.cache_key));
    }

    #[test]
    fn failure_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path().join("cache"));
        let manifest_path = dir.path().join("manifest.jsonl");
        let gw = Gateway::new(
            Some(cache.clone()),
            Some(Manifest::create(&manifest_path).unwrap()),
            1,
        );
        let mock = MockBackend::new().with_default("A").with_context_limit(2);
        let err = gw.complete(&mock, &req("one two three"), "u").unwrap_err();
        assert!(matches!(err, GatewayError::ContextLength { .. }));
        assert!(cache.is_empty());
        assert_eq!(std::fs::read_to_string(&manifest_path).unwrap(), "");
    }

    #[test]
    fn invalid_requests_rejected() {
        let gw = Gateway::new(None, None, 1);
        let mock = MockBackend::new().with_default("A");
        assert!(matches!(
            gw.complete(&mock, &req("  "), "u"),
            Err(GatewayError::InvalidRequest(_))
        ));
        let hot = CompletionRequest {
            temperature: -0.1,
            ..req("p")
        };
        assert!(matches!(
            gw.complete(&mock, &hot, "u"),
            Err(GatewayError::InvalidRequest(_))
        ));
        assert_eq!(mock.calls(), 0);
    }

    /// Slow backend that tracks peak concurrency.
    struct Slow {
        now: AtomicUsize,
        peak: AtomicUsize,
        calls: AtomicUsize,
    }

    impl Backend for Slow {
        fn complete(&self, r: &CompletionRequest) -> Result<BackendResponse, GatewayError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(n, Ordering::SeqCst);
            thread::sleep(Duration::from_millis(20));
            self.now.fetch_sub(1, Ordering::SeqCst);
            Ok(BackendResponse {
                text: format!("echo {}", r.prompt),
                usage: None,
                attempts: 1,
            })
        }
    }

    #[test]
    fn in_flight_cap_and_duplicate_collapse() {
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::new(Some(ResponseCache::new(dir.path())), None, 2);
        let slow = Slow {
            now: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        };
        thread::scope(|s| {
            for i in 0..12 {
                let (gw, slow) = (&gw, &slow);
                // six distinct prompts, each requested twice
                s.spawn(move || {
                    gw.complete(slow, &req(&format!("p{}", i % 6)), "u")
                        .unwrap()
                });
            }
        });
        assert!(slow.peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(slow.calls.load(Ordering::SeqCst), 6);
    }
}
