//! Run configuration: one JSON document, overridable from the command line.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::agreement::DEFAULT_CLUSTER_THRESHOLD;
use crate::corpus::{CorpusFormat, FilterPolicy};
use crate::evaluation::implicit::DEFAULT_ENTAILMENT_THRESHOLD;
use crate::evaluation::{Combiner, Comparator, MatchMode, Scope, DEFAULT_MATCH_THRESHOLD};
use crate::gateway::template::{EXPLICIT_TEMPLATE_ID, FULLTEXT_TEMPLATE_ID, TABI_TEMPLATE_ID};
use crate::gateway::MockBackend;
use crate::http::RetryPolicy;
use crate::segmentation::DEFAULT_CHUNK_BUDGET;
use crate::tabi::DEFAULT_FUZZY_RATIO;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Explicit,
    ImplicitParagraph,
    ImplicitFulltext,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Explicit => "explicit",
            Task::ImplicitParagraph => "implicit_paragraph",
            Task::ImplicitFulltext => "implicit_fulltext",
        }
    }

    pub fn default_template(self) -> &'static str {
        match self {
            Task::Explicit => EXPLICIT_TEMPLATE_ID,
            Task::ImplicitParagraph => TABI_TEMPLATE_ID,
            Task::ImplicitFulltext => FULLTEXT_TEMPLATE_ID,
        }
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| format!("unknown task `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    #[default]
    NoLimit,
    Chunked,
}

impl ContextMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ContextMode::NoLimit => "no_limit",
            ContextMode::Chunked => "chunked",
        }
    }
}

impl fmt::Display for ContextMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContextMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no_limit" => Ok(ContextMode::NoLimit),
            "chunked" => Ok(ContextMode::Chunked),
            other => Err(format!("unknown context mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub path: PathBuf,
    pub format: CorpusFormat,
    /// Gold statements carrying any of these flags are not scored.
    #[serde(default = "standard_flags")]
    pub exclude_flags: BTreeSet<String>,
}

fn standard_flags() -> BTreeSet<String> {
    FilterPolicy::standard().exclude_flags
}

impl CorpusConfig {
    pub fn filter_policy(&self) -> FilterPolicy {
        FilterPolicy {
            exclude_flags: self.exclude_flags.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    /// Any server speaking the OpenAI chat-completions protocol.
    Openai,
    Mock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model_id: String,
    pub provider: Provider,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock: Option<MockBackend>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_file: Option<PathBuf>,
}

fn default_max_output_tokens() -> u32 {
    2048
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    #[serde(rename = "match")]
    pub match_: f64,
    pub entailment: f64,
    pub cluster: f64,
    pub grounding: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            match_: DEFAULT_MATCH_THRESHOLD,
            entailment: DEFAULT_ENTAILMENT_THRESHOLD,
            cluster: DEFAULT_CLUSTER_THRESHOLD,
            grounding: DEFAULT_FUZZY_RATIO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub match_mode: MatchMode,
    pub match_comparator: Comparator,
    pub entailment_comparator: Comparator,
    pub combiner: Combiner,
    /// Require the warrant to be entailed by the premise as well.
    pub strict: bool,
    pub scope: Scope,
    pub use_stemming: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            match_mode: MatchMode::Greedy,
            match_comparator: Comparator::Ge,
            entailment_comparator: Comparator::Gt,
            combiner: Combiner::Min,
            strict: false,
            scope: Scope::Pooled,
            use_stemming: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    /// JSON file in the mock scorer's format.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub task: Task,
    #[serde(default)]
    pub context_mode: ContextMode,
    #[serde(default = "default_chunk_budget")]
    pub chunk_budget: usize,
    #[serde(default)]
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub evaluation: EvalOptions,
    /// Built-in template id or path to a JSON template; defaults per task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default = "default_run_dir")]
    pub run_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Keep only this many natural units, drawn with `seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer: Option<ScorerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cue_dictionary: Option<PathBuf>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_chunk_budget() -> usize {
    DEFAULT_CHUNK_BUDGET
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from("cache")
}

fn default_run_dir() -> PathBuf {
    PathBuf::from("run")
}

fn default_in_flight() -> usize {
    4
}

/// Command-line values that replace file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub run_dir: Option<PathBuf>,
    pub context_mode: Option<ContextMode>,
    /// Restrict to these model ids.
    pub models: Vec<String>,
    pub match_threshold: Option<f64>,
    pub entailment_threshold: Option<f64>,
    pub cluster_threshold: Option<f64>,
    pub grounding_threshold: Option<f64>,
    pub chunk_budget: Option<usize>,
}

impl RunConfig {
    /// Reads, resolves relative paths against the file's directory and
    /// validates.
    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            OrchestratorError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, OrchestratorError> {
        serde_json::from_str(text)
            .map_err(|e| OrchestratorError::Config(format!("invalid config: {e}")))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus.path);
        fix(&mut self.cache_dir);
        fix(&mut self.run_dir);
        if let Some(p) = self.cue_dictionary.as_mut() {
            fix(p);
        }
        if let Some(p) = self.scorer.as_mut().and_then(|s| s.table_file.as_mut()) {
            fix(p);
        }
        for m in &mut self.models {
            if let Some(p) = m.mock_file.as_mut() {
                fix(p);
            }
        }
        if let Some(t) = self.template.as_mut() {
            if crate::gateway::template::builtin_template(t).is_none() && Path::new(t).is_relative()
            {
                *t = base.join(&*t).to_string_lossy().into_owned();
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.run_dir {
            self.run_dir = d.clone();
        }
        if let Some(m) = o.context_mode {
            self.context_mode = m;
        }
        if let Some(b) = o.chunk_budget {
            self.chunk_budget = b;
        }
        if !o.models.is_empty() {
            self.models.retain(|m| o.models.contains(&m.model_id));
        }
        let t = &mut self.thresholds;
        t.match_ = o.match_threshold.unwrap_or(t.match_);
        t.entailment = o.entailment_threshold.unwrap_or(t.entailment);
        t.cluster = o.cluster_threshold.unwrap_or(t.cluster);
        t.grounding = o.grounding_threshold.unwrap_or(t.grounding);
    }

    pub fn template_id(&self) -> &str {
        self.template
            .as_deref()
            .unwrap_or(self.task.default_template())
    }

    /// Everything that can be checked without touching the network.
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let err = |m: String| Err(OrchestratorError::Config(m));
        if self.chunk_budget < 1 {
            return err("chunk_budget must be at least 1".into());
        }
        if self.max_in_flight < 1 {
            return err("max_in_flight must be at least 1".into());
        }
        let t = &self.thresholds;
        for (name, v) in [
            ("match", t.match_),
            ("entailment", t.entailment),
            ("cluster", t.cluster),
            ("grounding", t.grounding),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return err(format!("threshold `{name}` must be in (0, 1], got {v}"));
            }
        }
        if self.sample == Some(0) {
            return err("sample must be positive when given".into());
        }
        let mut seen = BTreeSet::new();
        for m in &self.models {
            if m.model_id.trim().is_empty() {
                return err("model_id must not be empty".into());
            }
            if !seen.insert(&m.model_id) {
                return err(format!("duplicate model_id `{}`", m.model_id));
            }
            if !(0.0..=2.0).contains(&m.temperature) {
                return err(format!(
                    "model `{}`: temperature must be in [0, 2]",
                    m.model_id
                ));
            }
            if m.max_output_tokens == 0 {
                return err(format!(
                    "model `{}`: max_output_tokens must be positive",
                    m.model_id
                ));
            }
            match m.provider {
                Provider::Openai => {
                    if m.base_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
                        return err(format!(
                            "model `{}`: base_url is required for provider openai",
                            m.model_id
                        ));
                    }
                    if m.mock.is_some() || m.mock_file.is_some() {
                        return err(format!(
                            "model `{}`: mock settings given for provider openai",
                            m.model_id
                        ));
                    }
                }
                Provider::Mock => {
                    if m.mock.is_some() == m.mock_file.is_some() {
                        return err(format!(
                            "model `{}`: give exactly one of mock, mock_file",
                            m.model_id
                        ));
                    }
                }
            }
        }
        if let Some(s) = &self.scorer {
            match s.kind {
                ScorerKind::Http if s.url.is_none() => {
                    return err("scorer: url is required for kind http".into())
                }
                ScorerKind::Mock if s.table.is_some() == s.table_file.is_some() => {
                    return err(
                        "scorer: give exactly one of table, table_file for kind mock".into(),
                    )
                }
                _ => {}
            }
        }
        if self.task == Task::ImplicitParagraph && self.scorer.is_none() {
            return err("task implicit_paragraph needs a scorer".into());
        }
        Ok(())
    }

    /// Extraction additionally needs at least one model.
    pub fn validate_for_extract(&self) -> Result<(), OrchestratorError> {
        self.validate()?;
        if self.models.is_empty() {
            return Err(OrchestratorError::Config("no models configured".into()));
        }
        Ok(())
    }

    /// Copy safe to persist: inline mock tables and scorer tables stay,
    /// credentials are never part of the config in the first place.
    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}
