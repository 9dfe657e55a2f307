//! The `agreement` stage: clusters predictions of several models (from one
//! or more runs over the same corpus) and writes overlap tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::config::Task;
use super::{
    read_prediction, read_run_info, slug, to_pretty, OrchestratorError, RunInfo, PREDICTIONS_DIR,
};
use crate::agreement::{
    category_profile, cluster_predictions, dedup_counts, overlap_regions, pairwise_overlap,
    profile_csv, unique_vs_shared, Prediction, MAX_REGION_MODELS,
};
use crate::evaluation::{CueDictionary, RougeScorer};
use crate::tabi::{ExtractedStatement, FulltextGapPair, TabiInference};
use crate::util::atomic_write;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgreementSummary {
    pub models: Vec<String>,
    pub clusters: usize,
    pub regions: BTreeMap<String, usize>,
    pub files: Vec<PathBuf>,
}

/// Gap texts of one run, model by model in run order, units in file-name
/// order.
pub fn run_predictions(
    run_dir: &Path,
    info: &RunInfo,
) -> Result<Vec<Prediction>, OrchestratorError> {
    let mut out = Vec::new();
    for model in &info.models {
        let dir = run_dir.join(PREDICTIONS_DIR).join(slug(model));
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| {
                OrchestratorError::Data(format!("missing predictions: {}: {e}", dir.display()))
            })?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let file = read_prediction(&path)?;
            let texts: Vec<String> = match info.task {
                Task::Explicit => file
                    .typed_items::<ExtractedStatement>()?
                    .into_iter()
                    .map(|s| s.text)
                    .collect(),
                Task::ImplicitParagraph => file
                    .typed_items::<TabiInference>()?
                    .into_iter()
                    .map(|i| i.claim)
                    .collect(),
                Task::ImplicitFulltext => file
                    .typed_items::<FulltextGapPair>()?
                    .into_iter()
                    .map(|p| p.gap)
                    .collect(),
            };
            for (i, text) in texts.into_iter().enumerate() {
                out.push(Prediction::new(
                    model,
                    format!("{}:{i}", file.unit_id),
                    text,
                ));
            }
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct ModelRow<'a> {
    model: &'a str,
    unique: usize,
    shared: usize,
    raw: usize,
    deduplicated: usize,
}

/// Compares every model found across `run_dirs`. All runs must share task
/// and corpus, and each model may appear in only one run.
pub fn run_agreement(
    run_dirs: &[PathBuf],
    out_dir: &Path,
    threshold: f64,
    use_stemming: bool,
    cues: Option<&CueDictionary>,
) -> Result<AgreementSummary, OrchestratorError> {
    if run_dirs.is_empty() {
        return Err(OrchestratorError::Config("no run directories given".into()));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(OrchestratorError::Config(format!(
            "cluster threshold must be in (0, 1], got {threshold}"
        )));
    }
    let infos: Vec<RunInfo> = run_dirs
        .iter()
        .map(|d| read_run_info(d))
        .collect::<Result<_, _>>()?;
    let first = &infos[0];
    for (dir, info) in run_dirs.iter().zip(&infos).skip(1) {
        if info.corpus_digest != first.corpus_digest {
            return Err(OrchestratorError::Data(format!(
                "{} was run on a different corpus than {}",
                dir.display(),
                run_dirs[0].display()
            )));
        }
        if info.task != first.task {
            return Err(OrchestratorError::Data(format!(
                "{} is a {} run, {} is {}",
                dir.display(),
                info.task.as_str(),
                run_dirs[0].display(),
                first.task.as_str()
            )));
        }
    }
    let mut models: Vec<String> = Vec::new();
    let mut preds = Vec::new();
    for (dir, info) in run_dirs.iter().zip(&infos) {
        for m in &info.models {
            if models.contains(m) {
                return Err(OrchestratorError::Data(format!(
                    "model {m} appears in more than one run"
                )));
            }
            models.push(m.clone());
        }
        preds.extend(run_predictions(dir, info)?);
    }
    if models.len() < 2 {
        return Err(OrchestratorError::Data(format!(
            "agreement needs predictions from at least two models, found {}",
            models.len()
        )));
    }

    let scorer = RougeScorer::new(use_stemming);
    let clusters = cluster_predictions(&preds, threshold, &scorer);
    let (kind, regions) = if models.len() <= MAX_REGION_MODELS {
        (
            "regions",
            overlap_regions(&clusters, &models)
                .map_err(|e| OrchestratorError::Data(e.to_string()))?,
        )
    } else {
        ("pairwise", pairwise_overlap(&clusters, &models))
    };
    let split = unique_vs_shared(&clusters);
    let dedup = dedup_counts(&preds, &scorer);

    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let mut put = |name: &str, body: String| -> Result<(), OrchestratorError> {
        let path = out_dir.join(name);
        atomic_write(&path, body)?;
        files.push(path);
        Ok(())
    };
    put(
        "regions.json",
        to_pretty(&json!({
            "task": first.task.as_str(),
            "corpus_digest": first.corpus_digest,
            "models": models,
            "threshold": threshold,
            "kind": kind,
            "clusters": clusters.len(),
            "regions": regions,
        })),
    )?;
    let mut region_csv = String::from("region,count\n");
    for (k, v) in &regions {
        region_csv.push_str(&format!("{k},{v}\n"));
    }
    put("regions.csv", region_csv)?;

    let rows: Vec<ModelRow<'_>> = models
        .iter()
        .map(|m| {
            let s = split.get(m).copied().unwrap_or_default();
            let d = dedup.get(m).copied().unwrap_or_default();
            ModelRow {
                model: m,
                unique: s.unique,
                shared: s.shared,
                raw: d.raw,
                deduplicated: d.deduplicated,
            }
        })
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)
            .map_err(|e| OrchestratorError::Data(e.to_string()))?;
    }
    let csv_bytes = w
        .into_inner()
        .map_err(|e| OrchestratorError::Data(e.to_string()))?;
    put(
        "unique_shared.csv",
        String::from_utf8(csv_bytes).expect("utf-8 csv"),
    )?;

    let clusters_jsonl: String = clusters
        .iter()
        .map(|c| serde_json::to_string(c).expect("cluster serializes") + "\n")
        .collect();
    put("clusters.jsonl", clusters_jsonl)?;

    if let Some(dict) = cues {
        let mut by_model: BTreeMap<String, Vec<String>> =
            models.iter().map(|m| (m.clone(), Vec::new())).collect();
        for p in &preds {
            by_model
                .get_mut(&p.model_id)
                .expect("known model")
                .push(p.text.clone());
        }
        put(
            "category_profile.csv",
            profile_csv(&category_profile(&by_model, dict)),
        )?;
    }

    Ok(AgreementSummary {
        models,
        clusters: clusters.len(),
        regions,
        files,
    })
}
