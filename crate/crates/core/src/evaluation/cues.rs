//! Ignorance-cue dictionary: validation of extracted statements and
//! five-way category voting.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::GapCategory;
use crate::text::Normalizer;
use crate::util::sha256_hex;

#[derive(Debug, Error)]
pub enum CueError {
    #[error("cannot read cue dictionary {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cue dictionary line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("cue `{cue}` duplicates `{previous}` after case-folding and stemming")]
    Duplicate { cue: String, previous: String },
    #[error("cue dictionary is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueEntry {
    pub cue: String,
    pub category: GapCategory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueMatch {
    pub cue: String,
    pub category: GapCategory,
}

#[derive(Debug, Clone)]
pub struct CueDictionary {
    entries: Vec<CueEntry>,
    stemmed: Vec<Vec<String>>,
    version_tag: String,
    normalizer: Normalizer,
}

impl CueDictionary {
    /// Validates and indexes `entries`. Cues must be non-empty and unique
    /// after case-folding and stemming.
    pub fn new(entries: Vec<CueEntry>, version_tag: impl Into<String>) -> Result<Self, CueError> {
        if entries.is_empty() {
            return Err(CueError::Empty);
        }
        let normalizer = Normalizer::stemming();
        let mut seen: HashMap<Vec<String>, String> = HashMap::new();
        let mut stemmed = Vec::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            let toks = normalizer.tokens(&e.cue);
            if toks.is_empty() {
                return Err(CueError::Malformed {
                    line: i + 2,
                    message: format!("cue `{}` has no tokens", e.cue),
                });
            }
            if let Some(prev) = seen.insert(toks.clone(), e.cue.clone()) {
                return Err(CueError::Duplicate {
                    cue: e.cue.clone(),
                    previous: prev,
                });
            }
            stemmed.push(toks);
        }
        Ok(Self {
            entries,
            stemmed,
            version_tag: version_tag.into(),
            normalizer,
        })
    }

    /// Parses `cue,category` CSV (header required). The version tag is a
    /// content digest, so any edit to the file changes it.
    pub fn from_csv_str(text: &str) -> Result<Self, CueError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header_ok = reader
            .headers()
            .map(|h| h.iter().collect::<Vec<_>>() == ["cue", "category"])
            .unwrap_or(false);
        if !header_ok {
            return Err(CueError::Malformed {
                line: 1,
                message: "expected header `cue,category`".into(),
            });
        }
        let mut entries = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| CueError::Malformed {
                line,
                message: e.to_string(),
            })?;
            let cue = rec.get(0).unwrap_or_default();
            let category = rec.get(1).unwrap_or_default();
            if cue.is_empty() {
                return Err(CueError::Malformed {
                    line,
                    message: "empty cue".into(),
                });
            }
            let category = category
                .parse()
                .map_err(|e: String| CueError::Malformed { line, message: e })?;
            entries.push(CueEntry {
                cue: cue.to_string(),
                category,
            });
        }
        let tag = format!("sha256:{}", &sha256_hex(text)[..16]);
        Self::new(entries, tag)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CueError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CueError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_str(&text)
    }

    pub fn entries(&self) -> &[CueEntry] {
        &self.entries
    }

    pub fn version_tag(&self) -> &str {
        &self.version_tag
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All cues whose stemmed tokens occur contiguously in the statement,
    /// in dictionary order.
    pub fn matches(&self, statement: &str) -> Vec<CueMatch> {
        let toks = self.normalizer.tokens(statement);
        self.entries
            .iter()
            .zip(&self.stemmed)
            .filter(|(_, cue)| {
                cue.len() <= toks.len() && toks.windows(cue.len()).any(|w| w == cue.as_slice())
            })
            .map(|(e, _)| CueMatch {
                cue: e.cue.clone(),
                category: e.category,
            })
            .collect()
    }
}

pub fn cue_validate(statement: &str, dictionary: &CueDictionary) -> Vec<CueMatch> {
    dictionary.matches(statement)
}

/// Plurality category of the matched cues; ties go to the earlier category
/// in [`GapCategory::ALL`] order.
pub fn classify_category(statement: &str, dictionary: &CueDictionary) -> Option<GapCategory> {
    vote(&dictionary.matches(statement))
}

pub fn vote(matches: &[CueMatch]) -> Option<GapCategory> {
    let mut tally = [0usize; 5];
    for m in matches {
        tally[m.category.index()] += 1;
    }
    let best = *tally.iter().max()?;
    if best == 0 {
        return None;
    }
    GapCategory::ALL
        .into_iter()
        .find(|c| tally[c.index()] == best)
}
