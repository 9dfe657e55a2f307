//! Scoring: ROUGE-L matching for explicit gaps, cue validation and category
//! voting, entailment-based accuracy for implicit gaps, union accuracy and
//! bucket calibration.

pub mod cues;
pub mod entailment;
pub mod implicit;
pub mod matching;
pub mod metrics;
pub mod rouge;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cues::{classify_category, cue_validate, CueDictionary, CueEntry, CueError, CueMatch};
pub use entailment::{
    bidirectional_entailment, entailment_score, CachedScorer, Combiner, HttpNliScorer,
    MockNliScorer, NliScorer, ScorerError,
};
pub use implicit::{
    calibration, implicit_accuracy, score_implicit, union_accuracy, union_from_results,
    CalibrationReport, ClaimScore, ImplicitConfig, ImplicitUnitResult, UnionAccuracy,
};
pub use matching::{
    assign, match_one_to_one, Assignment, Candidate, MatchConfig, MatchMode, MatchResult, Outcome,
    DEFAULT_MATCH_THRESHOLD,
};
pub use metrics::{aggregate_prf, prf, DocumentRow, MetricsReport, Scope};
pub use rouge::{lcs_len, rouge_l_f1, rouge_l_tokens, RougeScorer};

/// How a score is compared against its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    /// score >= threshold
    Ge,
    /// score > threshold
    Gt,
}

impl Comparator {
    pub fn passes(self, score: f64, threshold: f64) -> bool {
        match self {
            Comparator::Ge => score >= threshold,
            Comparator::Gt => score > threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error("unit {0} has no gold conclusions")]
    NoGold(String),
    #[error("models cover different unit sets: {0}")]
    UnitSetMismatch(String),
}
