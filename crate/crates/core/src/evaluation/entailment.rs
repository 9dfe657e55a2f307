//! Entailment probabilities from an external NLI service.
//!
//! Wire contract: POST `{"pairs": [{"premise", "hypothesis"}]}` answered by
//! `{"scores": [p, ...]}`, one probability per pair, in order.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::http::{self, HttpError, RetryPolicy};
use crate::text::normalize_whitespace;
use crate::util::{atomic_write, sha256_hex};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScorerError {
    #[error("scorer unavailable after {attempts} attempt(s): {error}")]
    Service { error: HttpError, attempts: u32 },
    #[error("malformed scorer response: {0}")]
    Malformed(String),
    #[error("invalid scorer input: {0}")]
    InvalidInput(String),
}

/// Directional entailment probabilities for (premise, hypothesis) pairs.
pub trait NliScorer: Send + Sync {
    fn score_batch(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, ScorerError>;
}

impl<S: NliScorer + ?Sized> NliScorer for &S {
    fn score_batch(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, ScorerError> {
        (**self).score_batch(pairs)
    }
}

impl<S: NliScorer + ?Sized> NliScorer for Box<S> {
    fn score_batch(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, ScorerError> {
        (**self).score_batch(pairs)
    }
}

fn check_range(scores: &[f64], expected: usize) -> Result<(), ScorerError> {
    if scores.len() != expected {
        return Err(ScorerError::Malformed(format!(
            "expected {expected} scores, got {}",
            scores.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(ScorerError::Malformed(format!(
            "probability {bad} outside [0, 1]"
        )));
    }
    Ok(())
}

/// P(premise entails hypothesis).
pub fn entailment_score(
    scorer: &dyn NliScorer,
    premise: &str,
    hypothesis: &str,
) -> Result<f64, ScorerError> {
    Ok(score_pairs(scorer, &[(premise.to_string(), hypothesis.to_string())])?[0])
}

/// Batch form of [`entailment_score`] with input and range validation.
pub fn score_pairs(
    scorer: &dyn NliScorer,
    pairs: &[(String, String)],
) -> Result<Vec<f64>, ScorerError> {
    if pairs.is_empty() {
        return Ok(Vec::new());
    }
    if pairs
        .iter()
        .any(|(p, h)| p.trim().is_empty() || h.trim().is_empty())
    {
        return Err(ScorerError::InvalidInput(
            "premise and hypothesis must be non-empty".into(),
        ));
    }
    let scores = scorer.score_batch(pairs)?;
    check_range(&scores, pairs.len())?;
    Ok(scores)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    #[default]
    Min,
    Mean,
}

impl Combiner {
    pub fn combine(self, forward: f64, backward: f64) -> f64 {
        match self {
            Combiner::Min => forward.min(backward),
            Combiner::Mean => (forward + backward) / 2.0,
        }
    }
}

/// Combined score of a→b and b→a.
pub fn bidirectional_entailment(
    scorer: &dyn NliScorer,
    a: &str,
    b: &str,
    combiner: Combiner,
) -> Result<f64, ScorerError> {
    let s = score_pairs(
        scorer,
        &[
            (a.to_string(), b.to_string()),
            (b.to_string(), a.to_string()),
        ],
    )?;
    Ok(combiner.combine(s[0], s[1]))
}

/// Client for an HTTP NLI service.
pub struct HttpNliScorer {
    url: String,
    client: Client,
    retry: RetryPolicy,
}

impl HttpNliScorer {
    pub fn new(url: impl Into<String>, retry: RetryPolicy) -> Result<Self, ScorerError> {
        let client = http::build_client(&retry)
            .map_err(|error| ScorerError::Service { error, attempts: 0 })?;
        Ok(Self {
            url: url.into(),
            client,
            retry,
        })
    }
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

impl NliScorer for HttpNliScorer {
    fn score_batch(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, ScorerError> {
        let payload = json!({
            "pairs": pairs.iter().map(|(p, h)| json!({"premise": p, "hypothesis": h})).collect::<Vec<_>>()
        });
        let resp =
            http::post_json(&self.client, &self.url, None, &payload, &self.retry).map_err(|f| {
                match f.error {
                    HttpError::Decode(msg) => ScorerError::Malformed(msg),
                    error => ScorerError::Service {
                        error,
                        attempts: f.attempts,
                    },
                }
            })?;
        let parsed: ScoreResponse =
            serde_json::from_value(resp.body).map_err(|e| ScorerError::Malformed(e.to_string()))?;
        check_range(&parsed.scores, pairs.len())?;
        Ok(parsed.scores)
    }
}

/// One canned entry of a [`MockNliScorer`] table file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEntry {
    pub premise: String,
    pub hypothesis: String,
    pub score: f64,
    /// Score for the swapped direction; defaults to `score`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reverse: Option<f64>,
}

/// Table-driven scorer. Scores are returned unvalidated so range guards can
/// be exercised.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockNliScorer {
    /// Identical texts score 1.0.
    pub reflexive: bool,
    /// Score for pairs absent from the table.
    pub default: f64,
    pub entries: Vec<MockEntry>,
    #[serde(skip)]
    table: HashMap<(String, String), f64>,
    #[serde(skip)]
    calls: AtomicUsize,
}

impl MockNliScorer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reflexive(mut self, on: bool) -> Self {
        self.reflexive = on;
        self
    }

    pub fn with_default(mut self, score: f64) -> Self {
        self.default = score;
        self
    }

    /// Same score in both directions.
    pub fn with(self, a: &str, b: &str, score: f64) -> Self {
        self.with_directed(a, b, score, score)
    }

    pub fn with_directed(mut self, a: &str, b: &str, forward: f64, backward: f64) -> Self {
        self.entries.push(MockEntry {
            premise: a.into(),
            hypothesis: b.into(),
            score: forward,
            reverse: Some(backward),
        });
        self.index();
        self
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let mut m: MockNliScorer = serde_json::from_str(text)?;
        m.index();
        Ok(m)
    }

    fn index(&mut self) {
        self.table.clear();
        for e in &self.entries {
            let (p, h) = (
                normalize_whitespace(&e.premise),
                normalize_whitespace(&e.hypothesis),
            );
            self.table
                .insert((h.clone(), p.clone()), e.reverse.unwrap_or(e.score));
            self.table.insert((p, h), e.score);
        }
    }

    /// Number of `score_batch` invocations so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn lookup(&self, premise: &str, hypothesis: &str) -> f64 {
        let key = (
            normalize_whitespace(premise),
            normalize_whitespace(hypothesis),
        );
        if let Some(&s) = self.table.get(&key) {
            return s;
        }
        if self.reflexive && key.0 == key.1 {
            return 1.0;
        }
        self.default
    }
}

impl NliScorer for MockNliScorer {
    fn score_batch(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, ScorerError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(pairs.iter().map(|(p, h)| self.lookup(p, h)).collect())
    }
}

/// Memoizes another scorer by text-pair digest, optionally persisting each
/// score as a small JSON file so later runs make no scorer calls.
pub struct CachedScorer<S> {
    inner: S,
    memory: Mutex<HashMap<String, f64>>,
    dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct CachedScore {
    premise: String,
    hypothesis: String,
    score: f64,
}

impl<S: NliScorer> CachedScorer<S> {
    pub fn new(inner: S, dir: Option<PathBuf>) -> Self {
        Self {
            inner,
            memory: Mutex::new(HashMap::new()),
            dir,
        }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn pair_digest(premise: &str, hypothesis: &str) -> String {
        sha256_hex(serde_json::to_vec(&[premise, hypothesis]).expect("strings serialize"))
    }

    fn disk_get(&self, key: &str) -> Option<f64> {
        let path = self.dir.as_ref()?.join(format!("{key}.json"));
        let text = fs::read_to_string(path).ok()?;
        let cached: CachedScore = serde_json::from_str(&text).ok()?;
        (0.0..=1.0).contains(&cached.score).then_some(cached.score)
    }

    fn disk_put(&self, key: &str, premise: &str, hypothesis: &str, score: f64) {
        let Some(dir) = &self.dir else { return };
        let body = serde_json::to_string_pretty(&CachedScore {
            premise: premise.into(),
            hypothesis: hypothesis.into(),
            score,
        })
        .expect("score serializes");
        if let Err(e) = atomic_write(&dir.join(format!("{key}.json")), body) {
            log::warn!("could not persist scorer cache entry {key}: {e}");
        }
    }
}

impl<S: NliScorer> NliScorer for CachedScorer<S> {
    fn score_batch(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, ScorerError> {
        let keys: Vec<String> = pairs.iter().map(|(p, h)| Self::pair_digest(p, h)).collect();
        let mut out: Vec<Option<f64>> = Vec::with_capacity(pairs.len());
        {
            let mut mem = self.memory.lock().expect("scorer cache lock");
            for key in &keys {
                let hit = mem.get(key).copied().or_else(|| self.disk_get(key));
                if let Some(s) = hit {
                    mem.insert(key.clone(), s);
                }
                out.push(hit);
            }
        }
        // first occurrence of each missing key, in input order
        let mut miss_idx: Vec<usize> = Vec::new();
        for (i, o) in out.iter().enumerate() {
            if o.is_none() && !miss_idx.iter().any(|&j| keys[j] == keys[i]) {
                miss_idx.push(i);
            }
        }
        if !miss_idx.is_empty() {
            let batch: Vec<(String, String)> = miss_idx.iter().map(|&i| pairs[i].clone()).collect();
            let scores = self.inner.score_batch(&batch)?;
            check_range(&scores, batch.len())?;
            let mut mem = self.memory.lock().expect("scorer cache lock");
            for (&i, &s) in miss_idx.iter().zip(&scores) {
                mem.insert(keys[i].clone(), s);
                self.disk_put(&keys[i], &pairs[i].0, &pairs[i].1, s);
            }
            for (o, key) in out.iter_mut().zip(&keys) {
                if o.is_none() {
                    *o = mem.get(key).copied();
                }
            }
        }
        Ok(out
            .into_iter()
            .map(|o| o.expect("every pair scored"))
            .collect())
    }
}
