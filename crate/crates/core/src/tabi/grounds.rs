//! Checks that cited grounds actually come from the premise.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::TabiInference;
use crate::text::{normalize_whitespace, tokenize};

pub const DEFAULT_FUZZY_RATIO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundStatus {
    /// Case-insensitive substring of the premise.
    Exact,
    /// Enough of the ground's tokens occur in the premise.
    Fuzzy,
    Unsupported,
}

impl GroundStatus {
    pub fn is_supported(self) -> bool {
        !matches!(self, GroundStatus::Unsupported)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundCheck {
    pub ground: String,
    pub status: GroundStatus,
    /// Fraction of the ground's tokens found in the premise.
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingReport {
    pub checks: Vec<GroundCheck>,
    pub grounded: bool,
}

/// Classifies every ground of `inference` against `premise`.
///
/// Token overlap counts with multiplicity: a ground repeating a word twice
/// needs it twice in the premise.
pub fn verify_grounds(
    inference: &TabiInference,
    premise: &str,
    fuzzy_ratio: f64,
) -> GroundingReport {
    let premise_folded = normalize_whitespace(premise).to_lowercase();
    let mut premise_bag: HashMap<String, usize> = HashMap::new();
    for tok in tokenize(premise) {
        *premise_bag.entry(tok).or_default() += 1;
    }

    let checks: Vec<GroundCheck> = inference
        .grounds
        .iter()
        .map(|ground| {
            let overlap = token_overlap(ground, &premise_bag);
            let folded = normalize_whitespace(ground).to_lowercase();
            let status = if !folded.is_empty() && premise_folded.contains(&folded) {
                GroundStatus::Exact
            } else if overlap >= fuzzy_ratio && overlap > 0.0 {
                GroundStatus::Fuzzy
            } else {
                GroundStatus::Unsupported
            };
            GroundCheck {
                ground: ground.clone(),
                status,
                overlap,
            }
        })
        .collect();
    let grounded = !checks.is_empty() && checks.iter().all(|c| c.status.is_supported());
    GroundingReport { checks, grounded }
}

fn token_overlap(ground: &str, premise_bag: &HashMap<String, usize>) -> f64 {
    let tokens = tokenize(ground);
    if tokens.is_empty() {
        return 0.0;
    }
    let mut remaining = premise_bag.clone();
    let hits = tokens
        .iter()
        .filter(|t| match remaining.get_mut(t.as_str()) {
            Some(n) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        })
        .count();
    hits as f64 / tokens.len() as f64
}
