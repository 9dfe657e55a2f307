//! Run pipeline: extract, evaluate, cross-model agreement and review
//! exchange, all sharing one run directory.
//!
//! Run directory layout:
//!
//! ```text
//! config.json        resolved configuration (no secrets)
//! run.json           task, setting, corpus digest, model ids
//! units.jsonl        prompt units in order
//! chunks.jsonl       chunk spans (chunked mode only)
//! manifest.jsonl     one row per completion
//! predictions/<model>/<unit>.json
//! reports/           evaluation output
//! ```

pub mod agreement_run;
pub mod config;
pub mod evaluate;
pub mod extract;
pub mod review;
pub mod units;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use agreement_run::{run_agreement, AgreementSummary};
pub use config::{
    ContextMode, ModelConfig, Overrides, Provider, RunConfig, ScorerConfig, ScorerKind, Task,
    Thresholds,
};
pub use evaluate::{run_evaluate, EvaluateSummary};
pub use extract::{run_extract, ExtractSummary};
pub use review::{export_review_bundle, import_judgments, ValidationReport};

use crate::corpus::CorpusError;
use crate::evaluation::{CueError, EvalError, ScorerError};
use crate::gateway::{CacheKey, GatewayError, TemplateError};
use crate::tabi::Diagnostic;
use crate::util::sha256_hex;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("service error: {0}")]
    Service(String),
}

impl OrchestratorError {
    /// Process exit status for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            OrchestratorError::Config(_) => 1,
            OrchestratorError::Data(_) => 2,
            OrchestratorError::Service(_) => 3,
        }
    }
}

impl From<io::Error> for OrchestratorError {
    fn from(e: io::Error) -> Self {
        OrchestratorError::Data(e.to_string())
    }
}

impl From<CorpusError> for OrchestratorError {
    fn from(e: CorpusError) -> Self {
        OrchestratorError::Data(e.to_string())
    }
}

impl From<TemplateError> for OrchestratorError {
    fn from(e: TemplateError) -> Self {
        OrchestratorError::Config(e.to_string())
    }
}

impl From<CueError> for OrchestratorError {
    fn from(e: CueError) -> Self {
        OrchestratorError::Config(format!("cue dictionary: {e}"))
    }
}

impl From<GatewayError> for OrchestratorError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::InvalidRequest(_) => OrchestratorError::Config(e.to_string()),
            GatewayError::Io(_) => OrchestratorError::Data(e.to_string()),
            _ => OrchestratorError::Service(e.to_string()),
        }
    }
}

impl From<ScorerError> for OrchestratorError {
    fn from(e: ScorerError) -> Self {
        match e {
            ScorerError::InvalidInput(_) => OrchestratorError::Data(e.to_string()),
            _ => OrchestratorError::Service(e.to_string()),
        }
    }
}

impl From<EvalError> for OrchestratorError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Scorer(s) => s.into(),
            other => OrchestratorError::Data(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionStatus {
    Ok,
    /// The prompt did not fit the model's context window.
    ContextLength,
}

/// Parsed output of one model on one prompt unit. Holds nothing that
/// changes between a cold and a warm run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub unit_id: String,
    pub natural_ref: String,
    pub doc_ref: String,
    pub model_id: String,
    pub task: Task,
    pub template_id: String,
    pub status: PredictionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_key: Option<CacheKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub raw_text: String,
    /// Statements, inferences or gap pairs depending on `task`.
    pub items: Vec<Value>,
    pub diagnostics: Vec<Diagnostic>,
}

impl PredictionFile {
    pub fn typed_items<T: for<'de> Deserialize<'de>>(&self) -> Result<Vec<T>, OrchestratorError> {
        self.items
            .iter()
            .map(|v| serde_json::from_value(v.clone()))
            .collect::<Result<_, _>>()
            .map_err(|e| {
                OrchestratorError::Data(format!(
                    "prediction {}/{}: malformed item: {e}",
                    self.model_id, self.unit_id
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub task: Task,
    pub setting: ContextMode,
    pub chunk_budget: usize,
    pub template_id: String,
    pub corpus_digest: String,
    pub models: Vec<String>,
    pub natural_units: usize,
    pub prompt_units: usize,
}

pub const CONFIG_FILE: &str = "config.json";
pub const RUN_FILE: &str = "run.json";
pub const UNITS_FILE: &str = "units.jsonl";
pub const CHUNKS_FILE: &str = "chunks.jsonl";
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const PREDICTIONS_DIR: &str = "predictions";
pub const REPORTS_DIR: &str = "reports";

/// File-system-safe name. Ids that need changing get a short digest suffix
/// so distinct ids never collide.
pub fn slug(id: &str) -> String {
    let clean: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if clean == id && !id.is_empty() && !id.starts_with('.') {
        clean
    } else {
        format!("{}-{}", clean.trim_start_matches('.'), &sha256_hex(id)[..8])
    }
}

pub fn prediction_path(run_dir: &Path, model_id: &str, unit_id: &str) -> PathBuf {
    run_dir
        .join(PREDICTIONS_DIR)
        .join(slug(model_id))
        .join(format!("{}.json", slug(unit_id)))
}

pub fn read_run_info(run_dir: &Path) -> Result<RunInfo, OrchestratorError> {
    let path = run_dir.join(RUN_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| OrchestratorError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| OrchestratorError::Data(format!("{}: {e}", path.display())))
}

/// The configuration an extract run persisted in its directory.
pub fn read_run_config(run_dir: &Path) -> Result<RunConfig, OrchestratorError> {
    let path = run_dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| OrchestratorError::Data(format!("cannot read {}: {e}", path.display())))?;
    let cfg = RunConfig::from_json(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_prediction(path: &Path) -> Result<PredictionFile, OrchestratorError> {
    let text = fs::read_to_string(path).map_err(|e| {
        OrchestratorError::Data(format!("missing predictions: {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| OrchestratorError::Data(format!("{}: {e}", path.display())))
}

pub(crate) fn to_pretty(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs() {
        assert_eq!(slug("gpt-4o_mini.v2"), "gpt-4o_mini.v2");
        let s = slug("org/model:7b");
        assert!(s.starts_with("org_model_7b-"), "{s}");
        assert_ne!(slug("a/b"), slug("a_b"));
        assert_ne!(slug("a/b"), slug("a:b"));
        assert!(!slug("..").starts_with('.'));
        assert_eq!(slug("d1/s1#c0").len(), "d1_s1_c0-".len() + 8);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(OrchestratorError::Config("x".into()).exit_code(), 1);
        assert_eq!(OrchestratorError::Data("x".into()).exit_code(), 2);
        assert_eq!(OrchestratorError::Service("x".into()).exit_code(), 3);
        let e: OrchestratorError = GatewayError::Provider {
            status: 500,
            body: "b".into(),
        }
        .into();
        assert_eq!(e.exit_code(), 3);
    }
}
