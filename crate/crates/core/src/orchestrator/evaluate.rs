//! The `evaluate` stage: scores persisted predictions against gold and
//! writes JSON and CSV reports under `reports/`.
//!
//! Reports carry no timestamps and list models in configuration order, so a
//! rerun over the same predictions and scorer cache reproduces them byte for
//! byte. Per-unit intermediates (match rows, unit results) are written next
//! to the tables so every number can be recomputed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::config::{RunConfig, ScorerKind, Task};
use super::units::{corpus_digest, plan_units, NaturalUnit, PlanOptions, Unit, UnitPlan};
use super::{
    prediction_path, read_prediction, read_run_info, slug, to_pretty, OrchestratorError,
    PredictionFile, PredictionStatus, RunInfo, PREDICTIONS_DIR, REPORTS_DIR,
};
use crate::corpus::{load_corpus, GapCategory};
use crate::evaluation::implicit::union_accuracy;
use crate::evaluation::matching::match_with_scorer;
use crate::evaluation::{
    aggregate_prf, calibration, cue_validate, implicit_accuracy, score_implicit, CachedScorer,
    CalibrationReport, Candidate, CueDictionary, HttpNliScorer, ImplicitConfig, ImplicitUnitResult,
    MatchConfig, MatchResult, MetricsReport, MockNliScorer, NliScorer, Outcome, RougeScorer,
    UnionAccuracy,
};
use crate::tabi::{verify_grounds, ExtractedStatement, FulltextGapPair, TabiInference};
use crate::util::atomic_write;

/// Label of the union row, after the column heading used in published tables.
pub const UNION_ROW: &str = "All Models";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvaluateSummary {
    pub report_files: Vec<PathBuf>,
}

/// Percent with two decimals, as printed in accuracy tables.
pub fn percent2(fraction: f64) -> String {
    format!("{:.2}", fraction * 100.0)
}

pub(super) struct Loaded {
    pub(super) info: RunInfo,
    pub(super) plan: UnitPlan,
    /// model id → predictions in unit order
    pub(super) predictions: Vec<(String, Vec<PredictionFile>)>,
}

pub(super) fn load_run(run_dir: &Path, cfg: &RunConfig) -> Result<Loaded, OrchestratorError> {
    let info = read_run_info(run_dir)?;
    if info.task != cfg.task {
        return Err(OrchestratorError::Config(format!(
            "run was extracted for task {}, config says {}",
            info.task.as_str(),
            cfg.task.as_str()
        )));
    }
    let corpus = load_corpus(&cfg.corpus.path, cfg.corpus.format)?;
    if corpus_digest(&corpus) != info.corpus_digest {
        return Err(OrchestratorError::Data(format!(
            "gold corpus {} differs from the corpus the run was extracted from",
            cfg.corpus.path.display()
        )));
    }
    let plan = plan_units(
        &corpus,
        &PlanOptions {
            task: info.task,
            format: cfg.corpus.format,
            mode: info.setting,
            budget: info.chunk_budget,
            sample: cfg.sample,
            seed: cfg.seed,
        },
        &cfg.corpus.filter_policy(),
    )?;
    if plan.units.len() != info.prompt_units {
        return Err(OrchestratorError::Data(format!(
            "run has {} prompt units, gold corpus yields {}",
            info.prompt_units,
            plan.units.len()
        )));
    }
    let mut predictions = Vec::new();
    for model in &info.models {
        let dir = run_dir.join(PREDICTIONS_DIR).join(slug(model));
        let on_disk = fs::read_dir(&dir)
            .map(|rd| {
                rd.filter_map(Result::ok)
                    .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                    .count()
            })
            .unwrap_or(0);
        let mut files = Vec::with_capacity(plan.units.len());
        for unit in &plan.units {
            let file = read_prediction(&prediction_path(run_dir, model, &unit.unit_id))?;
            check_prediction(&file, unit, model)?;
            files.push(file);
        }
        if on_disk != files.len() {
            return Err(OrchestratorError::Data(format!(
                "model {model}: {on_disk} prediction files for {} units",
                files.len()
            )));
        }
        predictions.push((model.clone(), files));
    }
    Ok(Loaded {
        info,
        plan,
        predictions,
    })
}

fn check_prediction(
    file: &PredictionFile,
    unit: &Unit,
    model: &str,
) -> Result<(), OrchestratorError> {
    if file.unit_id != unit.unit_id
        || file.natural_ref != unit.natural_ref
        || file.model_id != model
    {
        return Err(OrchestratorError::Data(format!(
            "prediction for {model}/{} does not belong to unit {} of the gold corpus",
            file.unit_id, unit.unit_id
        )));
    }
    Ok(())
}

/// Items of every prompt unit, pooled per natural unit in unit order.
pub(super) fn pooled<'a>(
    files: &'a [PredictionFile],
    natural: &NaturalUnit,
) -> impl Iterator<Item = &'a PredictionFile> {
    let key = natural.natural_ref.clone();
    files.iter().filter(move |f| f.natural_ref == key)
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<(), OrchestratorError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| OrchestratorError::Data(e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| OrchestratorError::Data(e.to_string()))?;
    atomic_write(path, bytes)?;
    Ok(())
}

fn write_jsonl<S: Serialize>(path: &Path, rows: &[S]) -> Result<(), OrchestratorError> {
    let body: String = rows
        .iter()
        .map(|r| serde_json::to_string(r).expect("row serializes") + "\n")
        .collect();
    atomic_write(path, body)?;
    Ok(())
}

fn load_cues(cfg: &RunConfig) -> Result<Option<CueDictionary>, OrchestratorError> {
    cfg.cue_dictionary
        .as_ref()
        .map(CueDictionary::load)
        .transpose()
        .map_err(Into::into)
}

/// Builds the configured entailment scorer behind a disk cache.
pub fn build_scorer(cfg: &RunConfig) -> Result<Box<dyn NliScorer>, OrchestratorError> {
    let sc = cfg
        .scorer
        .as_ref()
        .ok_or_else(|| OrchestratorError::Config("no scorer configured".into()))?;
    let cache = Some(cfg.cache_dir.join("nli"));
    match sc.kind {
        ScorerKind::Mock => {
            let text = match (&sc.table, &sc.table_file) {
                (Some(v), _) => v.to_string(),
                (None, Some(path)) => fs::read_to_string(path).map_err(|e| {
                    OrchestratorError::Config(format!("scorer table {}: {e}", path.display()))
                })?,
                (None, None) => unreachable!("validated"),
            };
            let mock = MockNliScorer::from_json(&text)
                .map_err(|e| OrchestratorError::Config(format!("scorer table: {e}")))?;
            Ok(Box::new(CachedScorer::new(mock, cache)))
        }
        ScorerKind::Http => {
            let http = HttpNliScorer::new(sc.url.clone().unwrap_or_default(), cfg.retry.clone())?;
            Ok(Box::new(CachedScorer::new(http, cache)))
        }
    }
}

/// Evaluates the run in `run_dir` against the gold corpus named in `cfg`.
pub fn run_evaluate(run_dir: &Path, cfg: &RunConfig) -> Result<EvaluateSummary, OrchestratorError> {
    cfg.validate()?;
    let loaded = load_run(run_dir, cfg)?;
    let reports = run_dir.join(REPORTS_DIR);
    fs::create_dir_all(&reports)?;
    match loaded.info.task {
        Task::Explicit => evaluate_explicit(&loaded, cfg, &reports),
        Task::ImplicitParagraph => {
            let scorer = build_scorer(cfg)?;
            evaluate_implicit(&loaded, cfg, scorer.as_ref(), &reports)
        }
        Task::ImplicitFulltext => evaluate_fulltext(&loaded, &reports),
    }
}

#[derive(Serialize)]
struct ExplicitModelReport {
    model_id: String,
    setting: String,
    predictions: usize,
    exact_matches: usize,
    cue_supported: Option<usize>,
    categories: Option<BTreeMap<String, usize>>,
    context_length_units: usize,
    metrics: MetricsReport,
    correct_units: usize,
    gold_units: usize,
    accuracy: f64,
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    model: &'a str,
    setting: &'a str,
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    precision: f64,
    recall: f64,
    f1: f64,
    exact_matches: usize,
    predictions: usize,
    cue_supported: String,
}

#[derive(Serialize)]
struct AccuracyRow<'a> {
    model: &'a str,
    setting: &'a str,
    correct: usize,
    total: usize,
    accuracy_pct: String,
}

fn evaluate_explicit(
    loaded: &Loaded,
    cfg: &RunConfig,
    reports: &Path,
) -> Result<EvaluateSummary, OrchestratorError> {
    let opts = &cfg.evaluation;
    let match_cfg = MatchConfig {
        threshold: cfg.thresholds.match_,
        comparator: opts.match_comparator,
        mode: opts.match_mode,
        use_stemming: opts.use_stemming,
    };
    let rouge = RougeScorer::new(opts.use_stemming);
    let cues = load_cues(cfg)?;
    let setting = loaded.info.setting.as_str();
    let mut model_reports = Vec::new();
    let mut per_model_units: BTreeMap<String, BTreeMap<String, bool>> = BTreeMap::new();
    let mut files = Vec::new();
    fs::create_dir_all(reports.join("matches"))?;
    fs::create_dir_all(reports.join("statements"))?;

    for (model, preds) in &loaded.predictions {
        let mut rows: Vec<MatchResult> = Vec::new();
        let mut statements: Vec<ExtractedStatement> = Vec::new();
        let mut unit_correct = BTreeMap::new();
        for natural in &loaded.plan.naturals {
            let mut cands = Vec::new();
            for f in pooled(preds, natural) {
                for (i, s) in f
                    .typed_items::<ExtractedStatement>()?
                    .into_iter()
                    .enumerate()
                {
                    cands.push(Candidate::new(format!("{}:{i}", f.unit_id), s.text.clone()));
                    statements.push(s);
                }
            }
            let golds: Vec<Candidate> = natural
                .golds
                .iter()
                .map(|g| Candidate::new(&g.gap_id, &g.text))
                .collect();
            let mut unit_rows = match_with_scorer(&rouge, &cands, &golds, &match_cfg);
            for r in &mut unit_rows {
                r.doc_ref = natural.natural_ref.clone();
            }
            if !golds.is_empty() {
                let hit = unit_rows.iter().any(|r| r.outcome == Outcome::TruePositive);
                unit_correct.insert(natural.natural_ref.clone(), hit);
            }
            rows.extend(unit_rows);
        }
        let metrics = aggregate_prf(&rows, opts.scope, cfg.thresholds.match_);
        let (cue_supported, categories) = match &cues {
            Some(dict) => {
                let mut supported = 0;
                let mut cats: BTreeMap<String, usize> = BTreeMap::new();
                for s in &mut statements {
                    let matched = cue_validate(&s.text, dict);
                    if !matched.is_empty() {
                        supported += 1;
                    }
                    let cat = crate::evaluation::cues::vote(&matched);
                    s.matched_cues = matched.into_iter().map(|m| m.cue).collect();
                    s.category = cat;
                    *cats
                        .entry(cat.map_or("uncategorized", GapCategory::as_str).to_string())
                        .or_default() += 1;
                }
                (Some(supported), Some(cats))
            }
            None => (None, None),
        };
        let correct_units = unit_correct.values().filter(|&&b| b).count();
        let gold_units = unit_correct.len();
        let path = reports
            .join("matches")
            .join(format!("{}.jsonl", slug(model)));
        write_jsonl(&path, &rows)?;
        files.push(path);
        let path = reports
            .join("statements")
            .join(format!("{}.jsonl", slug(model)));
        write_jsonl(&path, &statements)?;
        files.push(path);
        model_reports.push(ExplicitModelReport {
            model_id: model.clone(),
            setting: setting.to_string(),
            predictions: statements.len(),
            exact_matches: rows.iter().filter(|r| r.exact).count(),
            cue_supported,
            categories,
            context_length_units: preds
                .iter()
                .filter(|f| f.status == PredictionStatus::ContextLength)
                .count(),
            metrics,
            correct_units,
            gold_units,
            accuracy: ratio(correct_units, gold_units),
        });
        per_model_units.insert(model.clone(), unit_correct);
    }
    let union = union_accuracy(&per_model_units)?;

    let metrics_rows: Vec<MetricsRow<'_>> = model_reports
        .iter()
        .map(|r| MetricsRow {
            model: &r.model_id,
            setting,
            tp: r.metrics.tp,
            fp: r.metrics.fp,
            fn_: r.metrics.fn_,
            precision: r.metrics.precision,
            recall: r.metrics.recall,
            f1: r.metrics.f1,
            exact_matches: r.exact_matches,
            predictions: r.predictions,
            cue_supported: r.cue_supported.map(|c| c.to_string()).unwrap_or_default(),
        })
        .collect();
    let mut accuracy_rows = vec![AccuracyRow {
        model: UNION_ROW,
        setting,
        correct: union.correct,
        total: union.total,
        accuracy_pct: percent2(union.accuracy),
    }];
    accuracy_rows.extend(model_reports.iter().map(|r| AccuracyRow {
        model: &r.model_id,
        setting,
        correct: r.correct_units,
        total: r.gold_units,
        accuracy_pct: percent2(r.accuracy),
    }));

    let report = json!({
        "task": "explicit",
        "setting": setting,
        "corpus_digest": loaded.info.corpus_digest,
        "template_id": loaded.info.template_id,
        "match": {
            "threshold": cfg.thresholds.match_,
            "comparator": opts.match_comparator.symbol(),
            "mode": opts.match_mode,
            "use_stemming": opts.use_stemming,
            "scope": opts.scope,
        },
        "cue_dictionary": cues.as_ref().map(|c| c.version_tag().to_string()),
        "models": model_reports,
        "union": union,
    });
    let path = reports.join("explicit_metrics.json");
    atomic_write(&path, to_pretty(&report))?;
    files.push(path);
    let path = reports.join("explicit_metrics.csv");
    write_csv(&path, &metrics_rows)?;
    files.push(path);
    let path = reports.join("explicit_accuracy.csv");
    write_csv(&path, &accuracy_rows)?;
    files.push(path);
    Ok(EvaluateSummary {
        report_files: files,
    })
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

#[derive(Serialize)]
struct ImplicitModelReport {
    model_id: String,
    setting: String,
    correct: usize,
    total: usize,
    accuracy: f64,
    accuracy_pct: String,
    inferences: usize,
    grounded_inferences: usize,
    warrant_entailed: usize,
    context_length_units: usize,
    calibration: CalibrationReport,
}

#[derive(Serialize)]
struct CalibrationRow<'a> {
    model: &'a str,
    setting: &'a str,
    correct_more: usize,
    correct_least: usize,
    total_more: usize,
    total_least: usize,
    least_fraction_of_correct: String,
}

fn evaluate_implicit(
    loaded: &Loaded,
    cfg: &RunConfig,
    scorer: &dyn NliScorer,
    reports: &Path,
) -> Result<EvaluateSummary, OrchestratorError> {
    let opts = &cfg.evaluation;
    let icfg = ImplicitConfig {
        threshold: cfg.thresholds.entailment,
        comparator: opts.entailment_comparator,
        combiner: opts.combiner,
        strict: opts.strict,
    };
    let setting = loaded.info.setting.as_str();
    let mut model_reports = Vec::new();
    let mut per_model_units: BTreeMap<String, BTreeMap<String, bool>> = BTreeMap::new();
    let mut files = Vec::new();
    fs::create_dir_all(reports.join("units"))?;

    for (model, preds) in &loaded.predictions {
        let mut results: Vec<ImplicitUnitResult> = Vec::new();
        let mut inferences_total = 0;
        let mut grounded = 0;
        for natural in &loaded.plan.naturals {
            let mut inferences: Vec<TabiInference> = Vec::new();
            for f in pooled(preds, natural) {
                inferences.extend(f.typed_items::<TabiInference>()?);
            }
            inferences_total += inferences.len();
            grounded += inferences
                .iter()
                .filter(|i| verify_grounds(i, &natural.text, cfg.thresholds.grounding).grounded)
                .count();
            results.push(score_implicit(
                &natural.natural_ref,
                model,
                &inferences,
                &natural.golds,
                &natural.text,
                &icfg,
                scorer,
            )?);
        }
        let (correct, accuracy) = implicit_accuracy(&results);
        let path = reports.join("units").join(format!("{}.jsonl", slug(model)));
        write_jsonl(&path, &results)?;
        files.push(path);
        model_reports.push(ImplicitModelReport {
            model_id: model.clone(),
            setting: setting.to_string(),
            correct,
            total: results.len(),
            accuracy,
            accuracy_pct: percent2(accuracy),
            inferences: inferences_total,
            grounded_inferences: grounded,
            warrant_entailed: results
                .iter()
                .flat_map(|r| &r.claims)
                .filter(|c| c.warrant_grounded)
                .count(),
            context_length_units: preds
                .iter()
                .filter(|f| f.status == PredictionStatus::ContextLength)
                .count(),
            calibration: calibration(&results),
        });
        per_model_units.insert(
            model.clone(),
            results
                .iter()
                .map(|r| (r.unit_ref.clone(), r.unit_correct))
                .collect(),
        );
    }
    let union: UnionAccuracy = union_accuracy(&per_model_units)?;

    let mut accuracy_rows = vec![AccuracyRow {
        model: UNION_ROW,
        setting,
        correct: union.correct,
        total: union.total,
        accuracy_pct: percent2(union.accuracy),
    }];
    accuracy_rows.extend(model_reports.iter().map(|r| AccuracyRow {
        model: &r.model_id,
        setting,
        correct: r.correct,
        total: r.total,
        accuracy_pct: r.accuracy_pct.clone(),
    }));
    let calibration_rows: Vec<CalibrationRow<'_>> = model_reports
        .iter()
        .map(|r| CalibrationRow {
            model: &r.model_id,
            setting,
            correct_more: r.calibration.correct_more,
            correct_least: r.calibration.correct_least,
            total_more: r.calibration.total_more,
            total_least: r.calibration.total_least,
            least_fraction_of_correct: r
                .calibration
                .least_fraction_of_correct
                .map(|f| f.to_string())
                .unwrap_or_default(),
        })
        .collect();

    let report = json!({
        "task": "implicit_paragraph",
        "setting": setting,
        "corpus_digest": loaded.info.corpus_digest,
        "template_id": loaded.info.template_id,
        "entailment": {
            "threshold": icfg.threshold,
            "comparator": icfg.comparator.symbol(),
            "combiner": icfg.combiner,
            "strict": icfg.strict,
            "quantifier": "exists_claim_exists_gold",
        },
        "grounding_ratio": cfg.thresholds.grounding,
        "models": model_reports,
        "union": {"label": UNION_ROW, "correct": union.correct, "total": union.total,
                  "accuracy": union.accuracy, "accuracy_pct": percent2(union.accuracy)},
    });
    let path = reports.join("implicit_accuracy.json");
    atomic_write(&path, to_pretty(&report))?;
    files.push(path);
    let path = reports.join("implicit_accuracy.csv");
    write_csv(&path, &accuracy_rows)?;
    files.push(path);
    let path = reports.join("implicit_calibration.csv");
    write_csv(&path, &calibration_rows)?;
    files.push(path);
    Ok(EvaluateSummary {
        report_files: files,
    })
}

#[derive(Serialize)]
struct FulltextRow<'a> {
    model: &'a str,
    setting: &'a str,
    documents: usize,
    pairs: usize,
    with_evidence: usize,
    diagnostics: usize,
}

/// Full-text inference has no automatic gold; the report counts what each
/// model produced so the review export can be sized.
fn evaluate_fulltext(
    loaded: &Loaded,
    reports: &Path,
) -> Result<EvaluateSummary, OrchestratorError> {
    let setting = loaded.info.setting.as_str();
    let mut rows = Vec::new();
    for (model, preds) in &loaded.predictions {
        let mut pairs = 0;
        let mut with_evidence = 0;
        let mut docs = BTreeSet::new();
        for f in preds {
            docs.insert(f.natural_ref.as_str());
            for p in f.typed_items::<FulltextGapPair>()? {
                pairs += 1;
                with_evidence += usize::from(p.evidence.is_some());
            }
        }
        rows.push(FulltextRow {
            model,
            setting,
            documents: docs.len(),
            pairs,
            with_evidence,
            diagnostics: preds.iter().map(|f| f.diagnostics.len()).sum(),
        });
    }
    let path = reports.join("fulltext_summary.csv");
    write_csv(&path, &rows)?;
    Ok(EvaluateSummary {
        report_files: vec![path],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_formatting() {
        assert_eq!(percent2(179.0 / 212.0), "84.43");
        assert_eq!(percent2(618.0 / 973.0), "63.51");
        assert_eq!(percent2(0.5), "50.00");
        assert_eq!(percent2(0.0), "0.00");
    }
}
