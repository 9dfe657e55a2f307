//! Content-addressed response cache: one JSON file per request digest.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CompletionRequest, Usage};
use crate::util::{atomic_write, sha256_hex};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    /// Digest over (model_id, prompt, temperature, max_output_tokens). The
    /// request tag is deliberately left out.
    pub fn of(req: &CompletionRequest) -> Self {
        let canonical = json!([
            req.model_id,
            req.prompt,
            req.temperature,
            req.max_output_tokens
        ]);
        CacheKey(sha256_hex(canonical.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub cache_key: CacheKey,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub prompt: String,
    pub text: String,
    #[serde(default)]
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// A missing or unreadable entry is a miss.
    pub fn get(&self, key: &CacheKey) -> Option<CacheEntry> {
        let text = fs::read_to_string(self.path_for(key)).ok()?;
        match serde_json::from_str::<CacheEntry>(&text) {
            Ok(entry) if &entry.cache_key == key => Some(entry),
            _ => {
                log::warn!("ignoring corrupt cache entry {key}");
                None
            }
        }
    }

    pub fn put(&self, entry: &CacheEntry) -> io::Result<()> {
        let body = serde_json::to_string_pretty(entry).expect("cache entry serializes");
        atomic_write(&self.path_for(&entry.cache_key), body + "\n")
    }

    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|rd| {
                rd.filter_map(Result::ok)
                    .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
