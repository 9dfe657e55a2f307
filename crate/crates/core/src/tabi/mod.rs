//! Toulmin-Abductive Bucketed Inference records.
//!
//! A model reads premises and answers with one or more claims, each backed by
//! grounds (evidence spans quoted from the premise), a one-sentence warrant
//! linking grounds to claim, and a confidence bucket.

mod grounds;
mod parse;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::GapCategory;

pub use grounds::{
    verify_grounds, GroundCheck, GroundStatus, GroundingReport, DEFAULT_FUZZY_RATIO,
};
pub use parse::{
    parse_gap_pairs, parse_statements, parse_tabi_output, Diagnostic, ParseContext, Parsed,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    MoreProbable,
    LeastProbable,
}

impl Bucket {
    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::MoreProbable => "more_probable",
            Bucket::LeastProbable => "least_probable",
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Bucket {
    type Err = String;

    /// Accepts the canonical names plus the loose spellings models produce
    /// ("More probable", "least-probable", "less probable", "high", "low").
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .trim_matches(|c: char| c == '`' || c == '*' || c == '"' || c == '\'')
            .to_lowercase()
            .chars()
            .map(|c| if c == '-' || c == ' ' { '_' } else { c })
            .collect();
        match key.as_str() {
            "more_probable" | "more" | "most_probable" | "more_likely" | "high" => {
                Ok(Bucket::MoreProbable)
            }
            "least_probable" | "least" | "less_probable" | "less" | "less_likely"
            | "least_likely" | "low" => Ok(Bucket::LeastProbable),
            _ => Err(format!("unknown bucket `{s}`")),
        }
    }
}

/// One claim inferred by a model for one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabiInference {
    pub unit_ref: String,
    pub model_id: String,
    pub claim: String,
    pub grounds: Vec<String>,
    pub warrant: String,
    pub bucket: Bucket,
}

/// An explicit gap statement pulled out of a unit by a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedStatement {
    pub text: String,
    pub unit_ref: String,
    pub model_id: String,
    #[serde(default)]
    pub matched_cues: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<GapCategory>,
}

/// A document-level gap with its suggested follow-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FulltextGapPair {
    pub gap: String,
    pub future_direction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
    pub doc_ref: String,
}

/// Splits inferences by bucket, preserving input order within each side.
pub fn bucket_partition(inferences: &[TabiInference]) -> (Vec<TabiInference>, Vec<TabiInference>) {
    inferences
        .iter()
        .cloned()
        .partition(|i| i.bucket == Bucket::MoreProbable)
}

/// JSON-lines serialization of inferences.
pub fn inferences_to_jsonl(inferences: &[TabiInference]) -> String {
    inferences
        .iter()
        .map(|i| serde_json::to_string(i).expect("inference serializes") + "\n")
        .collect()
}
