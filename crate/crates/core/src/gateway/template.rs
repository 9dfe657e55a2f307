//! Versioned prompt templates with `{name}` placeholders.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ExplicitExtraction,
    TabiInference,
    FulltextInference,
}

/// One worked example: an input and the output the model should imitate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub task_kind: TaskKind,
    pub shot_count: usize,
    pub body: String,
    #[serde(default)]
    pub instructions: String,
    /// Exemplars used when the caller supplies none.
    #[serde(default)]
    pub exemplars: Vec<Exemplar>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unbound placeholder {{{0}}} in template")]
    UnboundPlaceholder(String),
    #[error("template needs {expected} exemplar(s), got {got}")]
    ShotCount { expected: usize, got: usize },
    #[error("empty context")]
    EmptyContext,
    #[error("unknown template `{0}`")]
    Unknown(String),
    #[error("cannot load template {path}: {message}")]
    Load { path: String, message: String },
}

const PLACEHOLDERS: [&str; 3] = ["context", "shots", "instructions"];

/// Byte ranges and names of `{name}` markers, `name` matching `[a-z_]+`.
fn placeholders(body: &str) -> Vec<(usize, usize, &str)> {
    let bytes = body.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let name_len = bytes[i + 1..]
                .iter()
                .take_while(|b| b.is_ascii_lowercase() || **b == b'_')
                .count();
            let close = i + 1 + name_len;
            if name_len > 0 && bytes.get(close) == Some(&b'}') {
                out.push((i, close + 1, &body[i + 1..close]));
                i = close + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

impl PromptTemplate {
    /// Checks the body without rendering: `{context}` present, `{shots}`
    /// present iff shots are expected, no unknown markers.
    pub fn validate(&self) -> Result<(), TemplateError> {
        let names: Vec<&str> = placeholders(&self.body).into_iter().map(|p| p.2).collect();
        if let Some(unknown) = names.iter().find(|n| !PLACEHOLDERS.contains(n)) {
            return Err(TemplateError::UnboundPlaceholder(unknown.to_string()));
        }
        if !names.contains(&"context") {
            return Err(TemplateError::UnboundPlaceholder("context".into()));
        }
        if self.shot_count > 0 && !names.contains(&"shots") {
            return Err(TemplateError::UnboundPlaceholder("shots".into()));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self, TemplateError> {
        let load_err = |message: String| TemplateError::Load {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
        let t: PromptTemplate = serde_json::from_str(&text).map_err(|e| load_err(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }
}

/// Renders the shot block: numbered examples in the given order.
pub fn render_shots(shots: &[Exemplar]) -> String {
    let mut out = String::new();
    for (i, shot) in shots.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        write!(
            out,
            "Example {}\nInput:\n{}\n\nOutput:\n```json\n{}\n```",
            i + 1,
            shot.input.trim(),
            shot.output.trim()
        )
        .expect("write to string");
    }
    out
}

/// Substitutes every placeholder in one pass; inserted text is never
/// rescanned.
pub fn render_prompt(
    template: &PromptTemplate,
    context: &str,
    shots: &[Exemplar],
) -> Result<String, TemplateError> {
    template.validate()?;
    if shots.len() != template.shot_count {
        return Err(TemplateError::ShotCount {
            expected: template.shot_count,
            got: shots.len(),
        });
    }
    if context.trim().is_empty() {
        return Err(TemplateError::EmptyContext);
    }
    let shot_block = render_shots(shots);
    let body = &template.body;
    let mut out = String::with_capacity(body.len() + context.len() + shot_block.len());
    let mut last = 0;
    for (start, end, name) in placeholders(body) {
        out.push_str(&body[last..start]);
        out.push_str(match name {
            "context" => context.trim(),
            "shots" => &shot_block,
            _ => template.instructions.trim(),
        });
        last = end;
    }
    out.push_str(&body[last..]);
    Ok(out)
}

/// Renders with the template's own exemplars.
pub fn render_default(template: &PromptTemplate, context: &str) -> Result<String, TemplateError> {
    render_prompt(template, context, &template.exemplars)
}

pub const EXPLICIT_TEMPLATE_ID: &str = "explicit_extraction_v1";
pub const TABI_TEMPLATE_ID: &str = "tabi_inference_v1";
pub const FULLTEXT_TEMPLATE_ID: &str = "fulltext_inference_v1";

#[derive(Deserialize)]
struct RawExemplar {
    input: String,
    output: serde_json::Value,
}

fn tabi_exemplars() -> Vec<Exemplar> {
    let raw: Vec<RawExemplar> = serde_json::from_str(include_str!(
        "../../assets/templates/tabi_exemplars_v1.json"
    ))
    .expect("bundled exemplars parse");
    raw.into_iter()
        .map(|r| Exemplar {
            input: r.input,
            output: serde_json::to_string_pretty(&r.output).expect("exemplar serializes"),
        })
        .collect()
}

/// Templates shipped with the crate.
pub fn builtin_template(template_id: &str) -> Option<PromptTemplate> {
    let (task_kind, body, instructions, exemplars) = match template_id {
        EXPLICIT_TEMPLATE_ID => (
            TaskKind::ExplicitExtraction,
            include_str!("../../assets/templates/explicit_extraction_v1.txt"),
            include_str!("../../assets/templates/explicit_extraction_v1.instructions.txt"),
            Vec::new(),
        ),
        TABI_TEMPLATE_ID => (
            TaskKind::TabiInference,
            include_str!("../../assets/templates/tabi_inference_v1.txt"),
            include_str!("../../assets/templates/tabi_inference_v1.instructions.txt"),
            tabi_exemplars(),
        ),
        FULLTEXT_TEMPLATE_ID => (
            TaskKind::FulltextInference,
            include_str!("../../assets/templates/fulltext_inference_v1.txt"),
            include_str!("../../assets/templates/fulltext_inference_v1.instructions.txt"),
            Vec::new(),
        ),
        _ => return None,
    };
    Some(PromptTemplate {
        template_id: template_id.to_string(),
        task_kind,
        shot_count: exemplars.len(),
        body: body.to_string(),
        instructions: instructions.to_string(),
        exemplars,
    })
}

/// A built-in id, or a path (relative to `base_dir`) to a JSON template.
pub fn resolve_template(
    id_or_path: &str,
    base_dir: &Path,
) -> Result<PromptTemplate, TemplateError> {
    if let Some(t) = builtin_template(id_or_path) {
        return Ok(t);
    }
    let path = base_dir.join(id_or_path);
    if path.is_file() {
        return PromptTemplate::from_json_file(&path);
    }
    Err(TemplateError::Unknown(id_or_path.to_string()))
}
