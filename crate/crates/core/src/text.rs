//! Text normalization shared by every scorer in the crate.
//!
//! Lowercasing, punctuation stripping that keeps intra-word hyphens
//! (`non-diabetic` stays one token), whitespace tokenization and a pluggable
//! stemmer.

use std::fmt;
use std::sync::Arc;

use rust_stemmers::{Algorithm, Stemmer as SnowballStemmer};

/// Reduces a single lowercase token to its stem.
pub trait Stemmer: Send + Sync {
    fn stem(&self, token: &str) -> String;
}

/// Porter-family English stemmer, iterated to a fixed point so that
/// `stem(stem(t)) == stem(t)` holds for every token.
pub struct PorterStemmer {
    inner: SnowballStemmer,
}

impl PorterStemmer {
    // A single pass never needs more than a handful of re-applications in
    // practice; the cap only guards against pathological cycles.
    const MAX_PASSES: usize = 8;

    pub fn new() -> Self {
        Self {
            inner: SnowballStemmer::create(Algorithm::English),
        }
    }
}

impl Default for PorterStemmer {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for PorterStemmer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PorterStemmer")
    }
}

impl Stemmer for PorterStemmer {
    fn stem(&self, token: &str) -> String {
        let mut current = token.to_string();
        for _ in 0..Self::MAX_PASSES {
            let next = self.inner.stem(&current).into_owned();
            if next == current {
                return current;
            }
            current = next;
        }
        current
    }
}

/// Identity stemmer, used when stemming is switched off.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoStemmer;

impl Stemmer for NoStemmer {
    fn stem(&self, token: &str) -> String {
        token.to_string()
    }
}

/// Collapses every whitespace run to a single space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Number of maximal non-whitespace runs.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Lowercases and replaces punctuation with spaces. A hyphen survives only
/// when both neighbours are alphanumeric.
pub fn strip_punctuation(text: &str) -> String {
    let lowered: Vec<char> = text.to_lowercase().chars().collect();
    let mut out = String::with_capacity(lowered.len());
    for (i, &c) in lowered.iter().enumerate() {
        let inner_hyphen = c == '-'
            && i > 0
            && lowered[i - 1].is_alphanumeric()
            && lowered.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if c.is_alphanumeric() || c.is_whitespace() || inner_hyphen {
            out.push(c);
        } else {
            out.push(' ');
        }
    }
    out
}

/// Lowercase, punctuation-free whitespace tokens (no stemming).
pub fn tokenize(text: &str) -> Vec<String> {
    strip_punctuation(text)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Tokenizer with an optional stemmer. Cheap to clone.
#[derive(Clone)]
pub struct Normalizer {
    stemmer: Option<Arc<dyn Stemmer>>,
}

impl Normalizer {
    pub fn new(stemmer: Option<Arc<dyn Stemmer>>) -> Self {
        Self { stemmer }
    }

    /// Porter stemming enabled.
    pub fn stemming() -> Self {
        Self::new(Some(Arc::new(PorterStemmer::new())))
    }

    pub fn plain() -> Self {
        Self::new(None)
    }

    pub fn is_stemming(&self) -> bool {
        self.stemmer.is_some()
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        let raw = tokenize(text);
        match &self.stemmer {
            Some(s) => raw.iter().map(|t| s.stem(t)).collect(),
            None => raw,
        }
    }

    /// Normalized tokens joined by single spaces; the identity used for
    /// exact-duplicate detection.
    pub fn canonical(&self, text: &str) -> String {
        self.tokens(text).join(" ")
    }
}

impl Default for Normalizer {
    fn default() -> Self {
        Self::stemming()
    }
}

impl fmt::Debug for Normalizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Normalizer")
            .field("stemming", &self.is_stemming())
            .finish()
    }
}
