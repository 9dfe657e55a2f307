//! Corpora of scientific text at paragraph, section and full-document
//! granularity, with gold gap annotations.
//!
//! Three input layouts are understood (see [`CorpusFormat`]):
//!
//! * `paragraph_jsonl`: one paragraph per line,
//!   `{para_id, text | sentences[], gold_gaps[], masked_conclusions[], flags[]}`
//!   plus optional `doc_id`, `section_id`, `heading`, `title`, `source`.
//! * `section_jsonl`: one section per line,
//!   `{doc_id, section_id, heading, paragraphs[], gold_gaps[]}`.
//! * `fulltext_dir`: a directory of UTF-8 `.txt` files, sections opened by
//!   `---SECTION: <heading>---` lines and paragraphs separated by blank lines.
//!
//! [`write_corpus`] emits the canonical `section_jsonl` form, which reloads to
//! a structurally equal corpus.

mod load;
mod types;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use load::{
    load_corpus, load_corpus_with, parse_jsonl, CorpusFormat, SCHEMA_VERSION, SECTION_MARKER_PREFIX,
};
pub use types::*;

use crate::text::normalize_whitespace;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus path not found: {}", .0.display())]
    Missing(PathBuf),
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{location}: field `{field}`: {message}")]
    Malformed {
        location: String,
        field: String,
        message: String,
    },
    #[error("{location}: duplicate {kind} `{id}`")]
    Duplicate {
        kind: &'static str,
        id: String,
        location: String,
    },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn malformed(loc: &load::Loc, field: &str, message: &str) -> Self {
        CorpusError::Malformed {
            location: loc.as_str().to_string(),
            field: field.to_string(),
            message: message.to_string(),
        }
    }
}

/// Which curation flags exclude a gold statement from evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub exclude_flags: BTreeSet<String>,
}

impl FilterPolicy {
    /// Flags used by the bundled adapters for non-gap and general-knowledge
    /// statements.
    pub const STANDARD_FLAGS: [&'static str; 2] = ["non_gap", "general_knowledge"];

    /// Keeps everything.
    pub fn none() -> Self {
        Self::default()
    }

    pub fn standard() -> Self {
        Self::excluding(Self::STANDARD_FLAGS)
    }

    pub fn excluding<I, S>(flags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            exclude_flags: flags.into_iter().map(Into::into).collect(),
        }
    }

    pub fn keeps(&self, gap: &GoldGap) -> bool {
        !gap.flags.iter().any(|f| self.exclude_flags.contains(f))
    }
}

/// Drops flagged gold gaps (section- and paragraph-level). Sentences,
/// masked conclusions and the document structure are left untouched.
pub fn filter_gap_statements(corpus: &Corpus, policy: &FilterPolicy) -> Corpus {
    let mut out = corpus.clone();
    for doc in &mut out.documents {
        for section in &mut doc.sections {
            section.gold_gaps.retain(|g| policy.keeps(g));
            for p in &mut section.paragraphs {
                p.gold_gaps.retain(|g| policy.keeps(g));
            }
        }
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MaskError {
    #[error("paragraph `{0}` has no masked conclusions")]
    NoConclusions(String),
    #[error("conclusion `{gap_id}` not found as a trailing sentence run of paragraph `{para_id}`")]
    NotFound { para_id: String, gap_id: String },
    #[error("masking paragraph `{0}` would leave an empty premise")]
    EmptyPremise(String),
}

/// A paragraph with its trailing conclusion sentences removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedParagraph {
    pub para_id: String,
    pub premise_sentences: Vec<Sentence>,
    pub masked_sentences: Vec<Sentence>,
    /// Removed gold conclusions in document order.
    pub gold_conclusions: Vec<GoldGap>,
}

impl MaskedParagraph {
    pub fn premise_text(&self) -> String {
        types::join_sentences(&self.premise_sentences)
    }
}

/// Removes every masked conclusion from the end of `paragraph`.
///
/// Each conclusion must equal (after whitespace normalization) a run of
/// sentences; together the runs must form a suffix of the paragraph.
pub fn mask_conclusions(paragraph: &Paragraph) -> Result<MaskedParagraph, MaskError> {
    if paragraph.masked_conclusions.is_empty() {
        return Err(MaskError::NoConclusions(paragraph.para_id.clone()));
    }
    let sentences = &paragraph.sentences;
    let mut remaining: Vec<&GoldGap> = paragraph.masked_conclusions.iter().collect();
    let mut end = sentences.len();
    // (start index, conclusion) collected back to front
    let mut placed: Vec<(usize, &GoldGap)> = Vec::new();

    while !remaining.is_empty() {
        let hit = remaining.iter().enumerate().find_map(|(ri, gap)| {
            let target = normalize_whitespace(&gap.text);
            let mut joined = String::new();
            for start in (0..end).rev() {
                joined = if joined.is_empty() {
                    sentences[start].text.clone()
                } else {
                    format!("{} {}", sentences[start].text, joined)
                };
                if joined.len() > target.len() {
                    break;
                }
                if joined == target {
                    return Some((ri, start));
                }
            }
            None
        });
        match hit {
            Some((ri, start)) => {
                placed.push((start, remaining.remove(ri)));
                end = start;
            }
            None => {
                return Err(MaskError::NotFound {
                    para_id: paragraph.para_id.clone(),
                    gap_id: remaining[0].gap_id.clone(),
                })
            }
        }
    }
    if end == 0 {
        return Err(MaskError::EmptyPremise(paragraph.para_id.clone()));
    }
    placed.reverse();
    Ok(MaskedParagraph {
        para_id: paragraph.para_id.clone(),
        premise_sentences: sentences[..end].to_vec(),
        masked_sentences: sentences[end..].to_vec(),
        gold_conclusions: placed.into_iter().map(|(_, g)| g.clone()).collect(),
    })
}

/// Serializes a corpus as canonical `section_jsonl`, one section per line.
pub fn write_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    for doc in &corpus.documents {
        for section in &doc.sections {
            let paragraphs: Vec<_> = section
                .paragraphs
                .iter()
                .map(|p| {
                    json!({
                        "para_id": p.para_id,
                        "sentences": p.sentences.iter()
                            .map(|s| json!({"sent_id": s.sent_id, "text": s.text}))
                            .collect::<Vec<_>>(),
                        "gold_gaps": p.gold_gaps,
                        "masked_conclusions": p.masked_conclusions,
                    })
                })
                .collect();
            let mut record = json!({
                "schema_version": SCHEMA_VERSION,
                "doc_id": doc.doc_id,
                "section_id": section.section_id,
                "source": doc.source_tag,
                "paragraphs": paragraphs,
                "gold_gaps": section.gold_gaps,
            });
            if let Some(h) = &section.heading {
                record["heading"] = json!(h);
            }
            if let Some(t) = &doc.title {
                record["title"] = json!(t);
            }
            out.push_str(&record.to_string());
            out.push('\n');
        }
    }
    out
}
