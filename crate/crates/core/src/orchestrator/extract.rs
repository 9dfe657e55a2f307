//! The `extract` stage: render, complete, parse and persist every
//! (model, prompt unit) pair.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde_json::Value;

use super::config::{ModelConfig, Provider, RunConfig, Task};
use super::units::{corpus_digest, plan_units, units_jsonl, PlanOptions, Unit};
use super::{
    prediction_path, to_pretty, OrchestratorError, PredictionFile, PredictionStatus, RunInfo,
    CHUNKS_FILE, CONFIG_FILE, MANIFEST_FILE, PREDICTIONS_DIR, RUN_FILE, UNITS_FILE,
};
use crate::corpus::load_corpus;
use crate::gateway::{
    render_default, resolve_template, Backend, CompletionRequest, Gateway, GatewayError, Manifest,
    MockBackend, OpenAiBackend, PromptTemplate, ResponseCache, TaskKind, DEFAULT_CHAT_PATH,
};
use crate::segmentation::chunk_manifest;
use crate::tabi::{parse_gap_pairs, parse_statements, parse_tabi_output, Diagnostic, ParseContext};
use crate::util::atomic_write;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractSummary {
    pub run_dir: PathBuf,
    pub predictions: usize,
    pub cache_hits: usize,
    pub backend_calls: usize,
    /// Units skipped because the prompt exceeded the model's context.
    pub context_length: usize,
}

fn expected_kind(task: Task) -> TaskKind {
    match task {
        Task::Explicit => TaskKind::ExplicitExtraction,
        Task::ImplicitParagraph => TaskKind::TabiInference,
        Task::ImplicitFulltext => TaskKind::FulltextInference,
    }
}

/// Loads the template and checks it suits the task.
pub fn load_template(cfg: &RunConfig) -> Result<PromptTemplate, OrchestratorError> {
    let template = resolve_template(cfg.template_id(), Path::new(""))?;
    if template.task_kind != expected_kind(cfg.task) {
        return Err(OrchestratorError::Config(format!(
            "template `{}` is for {:?}, task is {}",
            template.template_id,
            template.task_kind,
            cfg.task.as_str()
        )));
    }
    Ok(template)
}

/// Builds a backend without contacting it. Missing credentials are a
/// config error.
pub fn build_backend(
    m: &ModelConfig,
    cfg: &RunConfig,
) -> Result<Box<dyn Backend>, OrchestratorError> {
    match m.provider {
        Provider::Mock => {
            let mock = match (&m.mock, &m.mock_file) {
                (Some(inline), _) => inline.clone(),
                (None, Some(path)) => {
                    let text = fs::read_to_string(path).map_err(|e| {
                        OrchestratorError::Config(format!(
                            "model `{}`: cannot read {}: {e}",
                            m.model_id,
                            path.display()
                        ))
                    })?;
                    serde_json::from_str::<MockBackend>(&text).map_err(|e| {
                        OrchestratorError::Config(format!(
                            "model `{}`: {}: {e}",
                            m.model_id,
                            path.display()
                        ))
                    })?
                }
                (None, None) => unreachable!("validated"),
            };
            Ok(Box::new(mock))
        }
        Provider::Openai => {
            let api_key = match &m.api_key_env {
                Some(var) => Some(std::env::var(var).map_err(|_| {
                    OrchestratorError::Config(format!(
                        "model `{}`: environment variable {var} is not set",
                        m.model_id
                    ))
                })?),
                None => None,
            };
            let backend = OpenAiBackend::new(
                m.base_url.as_deref().unwrap_or_default(),
                m.path.as_deref().unwrap_or(DEFAULT_CHAT_PATH),
                api_key,
                cfg.retry.clone(),
            )?;
            Ok(Box::new(backend))
        }
    }
}

fn parse_items(
    task: Task,
    raw: &str,
    unit: &Unit,
    model_id: &str,
) -> (Vec<Value>, Vec<Diagnostic>) {
    let ctx = ParseContext::new(&unit.natural_ref, model_id);
    fn to_values<T: serde::Serialize>(items: Vec<T>) -> Vec<Value> {
        items
            .iter()
            .map(|i| serde_json::to_value(i).expect("item serializes"))
            .collect()
    }
    match task {
        Task::Explicit => {
            let p = parse_statements(raw, &ctx);
            (to_values(p.items), p.diagnostics)
        }
        Task::ImplicitParagraph => {
            let p = parse_tabi_output(raw, &ctx);
            (to_values(p.items), p.diagnostics)
        }
        Task::ImplicitFulltext => {
            let p = parse_gap_pairs(raw, &ctx);
            (to_values(p.items), p.diagnostics)
        }
    }
}

enum JobOutcome {
    Done { cached: bool },
    ContextLength,
}

/// Runs extraction. `cfg` must already carry resolved paths and overrides.
pub fn run_extract(cfg: &RunConfig) -> Result<ExtractSummary, OrchestratorError> {
    cfg.validate_for_extract()?;
    let template = load_template(cfg)?;
    let backends: Vec<Box<dyn Backend>> = cfg
        .models
        .iter()
        .map(|m| build_backend(m, cfg))
        .collect::<Result<_, _>>()?;
    run_extract_with(cfg, &template, &backends)
}

/// Extraction with caller-supplied backends, one per configured model.
pub fn run_extract_with(
    cfg: &RunConfig,
    template: &PromptTemplate,
    backends: &[Box<dyn Backend>],
) -> Result<ExtractSummary, OrchestratorError> {
    assert_eq!(backends.len(), cfg.models.len(), "one backend per model");
    let corpus = load_corpus(&cfg.corpus.path, cfg.corpus.format)?;
    let plan = plan_units(
        &corpus,
        &PlanOptions {
            task: cfg.task,
            format: cfg.corpus.format,
            mode: cfg.context_mode,
            budget: cfg.chunk_budget,
            sample: cfg.sample,
            seed: cfg.seed,
        },
        &cfg.corpus.filter_policy(),
    )?;
    // render everything up front so template problems surface before any call
    let prompts: Vec<String> = plan
        .units
        .iter()
        .map(|u| render_default(template, &u.context))
        .collect::<Result<_, _>>()?;

    let run_dir = &cfg.run_dir;
    fs::create_dir_all(run_dir)?;
    let predictions_dir = run_dir.join(PREDICTIONS_DIR);
    if predictions_dir.exists() {
        fs::remove_dir_all(&predictions_dir)?;
    }
    atomic_write(&run_dir.join(CONFIG_FILE), cfg.to_pretty_json())?;
    let info = RunInfo {
        task: cfg.task,
        setting: cfg.context_mode,
        chunk_budget: cfg.chunk_budget,
        template_id: template.template_id.clone(),
        corpus_digest: corpus_digest(&corpus),
        models: cfg.models.iter().map(|m| m.model_id.clone()).collect(),
        natural_units: plan.naturals.len(),
        prompt_units: plan.units.len(),
    };
    atomic_write(&run_dir.join(RUN_FILE), to_pretty(&info))?;
    atomic_write(&run_dir.join(UNITS_FILE), units_jsonl(&plan.units))?;
    if !plan.chunks.is_empty() {
        atomic_write(&run_dir.join(CHUNKS_FILE), chunk_manifest(&plan.chunks))?;
    }

    let gateway = Gateway::new(
        Some(ResponseCache::new(&cfg.cache_dir)),
        Some(Manifest::create(&run_dir.join(MANIFEST_FILE))?),
        cfg.max_in_flight,
    );
    let jobs: Vec<(usize, usize)> = (0..cfg.models.len())
        .flat_map(|m| (0..plan.units.len()).map(move |u| (m, u)))
        .collect();
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let outcomes: Mutex<Vec<(usize, Result<JobOutcome, OrchestratorError>)>> =
        Mutex::new(Vec::new());
    let request_tag = format!("{}:{}", cfg.task.as_str(), cfg.context_mode);

    let run_job = |m: usize, u: usize| -> Result<JobOutcome, OrchestratorError> {
        let model = &cfg.models[m];
        let unit = &plan.units[u];
        let req = CompletionRequest {
            model_id: model.model_id.clone(),
            prompt: prompts[u].clone(),
            temperature: model.temperature,
            max_output_tokens: model.max_output_tokens,
            request_tag: request_tag.clone(),
        };
        let mut file = PredictionFile {
            unit_id: unit.unit_id.clone(),
            natural_ref: unit.natural_ref.clone(),
            doc_ref: unit.doc_ref.clone(),
            model_id: model.model_id.clone(),
            task: cfg.task,
            template_id: template.template_id.clone(),
            status: PredictionStatus::Ok,
            cache_key: None,
            error: None,
            raw_text: String::new(),
            items: Vec::new(),
            diagnostics: Vec::new(),
        };
        let outcome = match gateway.complete(backends[m].as_ref(), &req, &unit.unit_id) {
            Ok(result) => {
                let (items, diagnostics) =
                    parse_items(cfg.task, &result.text, unit, &model.model_id);
                file.cache_key = Some(result.cache_key);
                file.raw_text = result.text;
                file.items = items;
                file.diagnostics = diagnostics;
                JobOutcome::Done {
                    cached: result.cached,
                }
            }
            Err(GatewayError::ContextLength { message, .. }) => {
                log::warn!(
                    "{} on {}: context length exceeded",
                    model.model_id,
                    unit.unit_id
                );
                file.status = PredictionStatus::ContextLength;
                file.error = Some(message);
                JobOutcome::ContextLength
            }
            Err(e) => return Err(e.into()),
        };
        atomic_write(
            &prediction_path(run_dir, &model.model_id, &unit.unit_id),
            to_pretty(&file),
        )?;
        Ok(outcome)
    };

    let workers = cfg.max_in_flight.min(jobs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(m, u)) = jobs.get(i) else { break };
                let result = run_job(m, u);
                if result.is_err() {
                    abort.store(true, Ordering::SeqCst);
                }
                outcomes.lock().expect("outcome lock").push((i, result));
            });
        }
    });

    let mut outcomes = outcomes.into_inner().expect("outcome lock");
    outcomes.sort_by_key(|(i, _)| *i);
    let mut summary = ExtractSummary {
        run_dir: run_dir.clone(),
        ..Default::default()
    };
    for (_, outcome) in outcomes {
        match outcome? {
            JobOutcome::Done { cached } => {
                summary.predictions += 1;
                if cached {
                    summary.cache_hits += 1;
                } else {
                    summary.backend_calls += 1;
                }
            }
            JobOutcome::ContextLength => {
                summary.predictions += 1;
                summary.context_length += 1;
            }
        }
    }
    Ok(summary)
}
