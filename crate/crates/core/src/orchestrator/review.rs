//! Exchange with the review application: a self-contained bundle of
//! inferred gaps goes out, a JSON-lines file of expert judgments comes back
//! and is summarized into a human-validation report.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, Task};
use super::evaluate::{load_run, pooled};
use super::{to_pretty, OrchestratorError, REPORTS_DIR};
use crate::evaluation::{classify_category, CueDictionary};
use crate::tabi::{FulltextGapPair, TabiInference};
use crate::util::{atomic_write, sha256_hex};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewPrompts {
    pub gap_question: String,
    pub direction_question: String,
}

impl Default for ReviewPrompts {
    fn default() -> Self {
        Self {
            gap_question: "Does the text support this as an open knowledge gap?".into(),
            direction_question: "Is the proposed future direction a sensible way to address it?"
                .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub model_id: String,
    pub gap: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub future_direction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warrant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewGroup {
    pub unit_ref: String,
    pub unit_text: String,
    pub items: Vec<ReviewItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewBundle {
    pub schema_version: u32,
    pub task: Task,
    pub prompts: ReviewPrompts,
    pub groups: Vec<ReviewGroup>,
}

impl ReviewBundle {
    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = fs::read_to_string(path).map_err(|e| {
            OrchestratorError::Data(format!("cannot read bundle {}: {e}", path.display()))
        })?;
        let bundle: ReviewBundle = serde_json::from_str(&text)
            .map_err(|e| OrchestratorError::Data(format!("bundle {}: {e}", path.display())))?;
        if bundle.schema_version != BUNDLE_SCHEMA_VERSION {
            return Err(OrchestratorError::Data(format!(
                "bundle schema version {} is not supported",
                bundle.schema_version
            )));
        }
        Ok(bundle)
    }

    pub fn items(&self) -> impl Iterator<Item = &ReviewItem> {
        self.groups.iter().flat_map(|g| g.items.iter())
    }
}

fn item_id(model: &str, unit_ref: &str, index: usize, gap: &str) -> String {
    let digest =
        sha256_hex(serde_json::to_vec(&(model, unit_ref, index, gap)).expect("tuple serializes"));
    format!("it-{}", &digest[..12])
}

/// Writes the bundle for an implicit run to `out` (default
/// `reports/review_bundle.json`) and returns its path.
pub fn export_review_bundle(
    run_dir: &Path,
    cfg: &RunConfig,
    out: Option<&Path>,
) -> Result<PathBuf, OrchestratorError> {
    let loaded = load_run(run_dir, cfg)?;
    let task = loaded.info.task;
    if task == Task::Explicit {
        return Err(OrchestratorError::Data(
            "review export needs an implicit run".into(),
        ));
    }
    let cues = cfg
        .cue_dictionary
        .as_ref()
        .map(CueDictionary::load)
        .transpose()?;
    let category = |text: &str| {
        cues.as_ref()
            .and_then(|d| classify_category(text, d))
            .map(|c| c.as_str().to_string())
    };
    let mut groups = Vec::new();
    for natural in &loaded.plan.naturals {
        let mut items = Vec::new();
        for (model, files) in &loaded.predictions {
            let mut index = 0;
            for f in pooled(files, natural) {
                match task {
                    Task::ImplicitParagraph => {
                        for inf in f.typed_items::<TabiInference>()? {
                            items.push(ReviewItem {
                                item_id: item_id(model, &natural.natural_ref, index, &inf.claim),
                                model_id: model.clone(),
                                category: category(&inf.claim),
                                evidence: (!inf.grounds.is_empty())
                                    .then(|| inf.grounds.join(" | ")),
                                warrant: Some(inf.warrant),
                                bucket: Some(inf.bucket.as_str().to_string()),
                                gap: inf.claim,
                                future_direction: None,
                            });
                            index += 1;
                        }
                    }
                    Task::ImplicitFulltext => {
                        for pair in f.typed_items::<FulltextGapPair>()? {
                            items.push(ReviewItem {
                                item_id: item_id(model, &natural.natural_ref, index, &pair.gap),
                                model_id: model.clone(),
                                category: category(&pair.gap),
                                gap: pair.gap,
                                future_direction: Some(pair.future_direction),
                                evidence: pair.evidence,
                                warrant: None,
                                bucket: None,
                            });
                            index += 1;
                        }
                    }
                    Task::Explicit => unreachable!(),
                }
            }
        }
        groups.push(ReviewGroup {
            unit_ref: natural.natural_ref.clone(),
            unit_text: natural.text.clone(),
            items,
        });
    }
    let bundle = ReviewBundle {
        schema_version: BUNDLE_SCHEMA_VERSION,
        task,
        prompts: ReviewPrompts::default(),
        groups,
    };
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => run_dir.join(REPORTS_DIR).join("review_bundle.json"),
    };
    atomic_write(&path, to_pretty(&bundle))?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapVerdict {
    Agree,
    Partial,
    Disagree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionVerdict {
    Agree,
    Disagree,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Justification {
    Irrelevance,
    Misinterpretation,
    Outdated,
    TechnologicalLimits,
    BudgetConstraints,
    OtherGroupRelevance,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Judgment {
    pub item_id: String,
    pub gap_verdict: GapVerdict,
    pub direction_verdict: DirectionVerdict,
    #[serde(default)]
    pub justification: Option<Justification>,
    #[serde(default)]
    pub note: String,
    pub reviewer_tag: String,
    pub timestamp: String,
}

/// Counts of gap verdicts; percentages to one decimal, 0 when empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerdictTally {
    pub judged: usize,
    pub agree: usize,
    pub partial: usize,
    pub disagree: usize,
    pub agree_pct: f64,
    pub partial_pct: f64,
    pub disagree_pct: f64,
}

impl VerdictTally {
    fn add(&mut self, v: GapVerdict) {
        self.judged += 1;
        match v {
            GapVerdict::Agree => self.agree += 1,
            GapVerdict::Partial => self.partial += 1,
            GapVerdict::Disagree => self.disagree += 1,
        }
        self.agree_pct = pct1(self.agree, self.judged);
        self.partial_pct = pct1(self.partial, self.judged);
        self.disagree_pct = pct1(self.disagree, self.judged);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionTally {
    pub agree: usize,
    pub disagree: usize,
    pub not_applicable: usize,
    /// Over agree + disagree.
    pub agree_pct: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub items_total: usize,
    pub items_judged: usize,
    pub coverage_pct: f64,
    pub judgments: usize,
    pub superseded: usize,
    pub gap: VerdictTally,
    pub direction: DirectionTally,
    pub by_bucket: BTreeMap<String, VerdictTally>,
    pub by_category: BTreeMap<String, VerdictTally>,
    pub by_model: BTreeMap<String, VerdictTally>,
    pub justifications: BTreeMap<String, usize>,
}

/// `100 * n / d` rounded to one decimal; 0 for an empty denominator.
pub fn pct1(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        (1000.0 * n as f64 / d as f64).round() / 10.0
    }
}

fn is_summary_line(v: &serde_json::Value) -> bool {
    v.get("summary").is_some() || v.get("kind").and_then(|k| k.as_str()) == Some("summary")
}

/// Parses judgments, keeping the last save per (item, reviewer).
///
/// A summary block exported alongside the judgments is skipped. A disagree
/// verdict without a justification code rejects the whole file.
pub fn parse_judgments(text: &str) -> Result<(Vec<Judgment>, usize), OrchestratorError> {
    let mut latest: Vec<Judgment> = Vec::new();
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let mut superseded = 0;
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| OrchestratorError::Data(format!("judgments line {line_no}: {e}")))?;
        if is_summary_line(&value) {
            continue;
        }
        let j: Judgment = serde_json::from_value(value)
            .map_err(|e| OrchestratorError::Data(format!("judgments line {line_no}: {e}")))?;
        let disagrees = j.gap_verdict == GapVerdict::Disagree
            || j.direction_verdict == DirectionVerdict::Disagree;
        if disagrees && j.justification.is_none() {
            return Err(OrchestratorError::Data(format!(
                "judgments line {line_no}: item {} is a disagree without a justification code",
                j.item_id
            )));
        }
        if chrono::DateTime::parse_from_rfc3339(&j.timestamp).is_err() {
            return Err(OrchestratorError::Data(format!(
                "judgments line {line_no}: timestamp `{}` is not ISO-8601",
                j.timestamp
            )));
        }
        let key = (j.item_id.clone(), j.reviewer_tag.clone());
        match index.get(&key) {
            Some(&i) => {
                latest[i] = j;
                superseded += 1;
            }
            None => {
                index.insert(key, latest.len());
                latest.push(j);
            }
        }
    }
    Ok((latest, superseded))
}

/// Summarizes `judgments` against the items of `bundle`.
pub fn validation_report(
    bundle: &ReviewBundle,
    judgments: &[Judgment],
    superseded: usize,
) -> Result<ValidationReport, OrchestratorError> {
    let items: HashMap<&str, &ReviewItem> =
        bundle.items().map(|i| (i.item_id.as_str(), i)).collect();
    let mut report = ValidationReport {
        items_total: items.len(),
        judgments: judgments.len(),
        superseded,
        ..Default::default()
    };
    let mut judged: HashSet<&str> = HashSet::new();
    for j in judgments {
        let item = items.get(j.item_id.as_str()).ok_or_else(|| {
            OrchestratorError::Data(format!("judgment for unknown item {}", j.item_id))
        })?;
        judged.insert(item.item_id.as_str());
        report.gap.add(j.gap_verdict);
        report
            .by_model
            .entry(item.model_id.clone())
            .or_default()
            .add(j.gap_verdict);
        if let Some(b) = &item.bucket {
            report
                .by_bucket
                .entry(b.clone())
                .or_default()
                .add(j.gap_verdict);
        }
        let cat = item
            .category
            .clone()
            .unwrap_or_else(|| "uncategorized".into());
        report
            .by_category
            .entry(cat)
            .or_default()
            .add(j.gap_verdict);
        match j.direction_verdict {
            DirectionVerdict::Agree => report.direction.agree += 1,
            DirectionVerdict::Disagree => report.direction.disagree += 1,
            DirectionVerdict::NotApplicable => report.direction.not_applicable += 1,
        }
        if let Some(code) = j.justification {
            let name = serde_json::to_value(code).expect("code serializes");
            *report
                .justifications
                .entry(name.as_str().expect("string code").to_string())
                .or_default() += 1;
        }
    }
    report.direction.agree_pct = pct1(
        report.direction.agree,
        report.direction.agree + report.direction.disagree,
    );
    report.items_judged = judged.len();
    report.coverage_pct = pct1(report.items_judged, report.items_total);
    Ok(report)
}

#[derive(Serialize)]
struct TallyRow<'a> {
    scope: &'a str,
    key: &'a str,
    judged: usize,
    agree: usize,
    partial: usize,
    disagree: usize,
    agree_pct: f64,
}

fn report_csv(r: &ValidationReport) -> Result<String, OrchestratorError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut row = |scope: &str, key: &str, t: &VerdictTally| {
        w.serialize(TallyRow {
            scope,
            key,
            judged: t.judged,
            agree: t.agree,
            partial: t.partial,
            disagree: t.disagree,
            agree_pct: t.agree_pct,
        })
        .map_err(|e| OrchestratorError::Data(e.to_string()))
    };
    row("overall", "all", &r.gap)?;
    for (scope, map) in [
        ("bucket", &r.by_bucket),
        ("category", &r.by_category),
        ("model", &r.by_model),
    ] {
        for (k, t) in map {
            row(scope, k, t)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| OrchestratorError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8 csv"))
}

/// Reads bundle and judgments, writes `human_validation.{json,csv}` into
/// `out_dir` and returns the report.
pub fn import_judgments(
    bundle: &Path,
    judgments: &Path,
    out_dir: &Path,
) -> Result<ValidationReport, OrchestratorError> {
    let bundle = ReviewBundle::load(bundle)?;
    let text = fs::read_to_string(judgments).map_err(|e| {
        OrchestratorError::Data(format!(
            "cannot read judgments {}: {e}",
            judgments.display()
        ))
    })?;
    let (parsed, superseded) = parse_judgments(&text)?;
    let report = validation_report(&bundle, &parsed, superseded)?;
    atomic_write(&out_dir.join("human_validation.json"), to_pretty(&report))?;
    atomic_write(&out_dir.join("human_validation.csv"), report_csv(&report)?)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(n: usize) -> ReviewBundle {
        ReviewBundle {
            schema_version: BUNDLE_SCHEMA_VERSION,
            task: Task::ImplicitFulltext,
            prompts: ReviewPrompts::default(),
            groups: vec![ReviewGroup {
                unit_ref: "d1".into(),
                unit_text: "text".into(),
                items: (0..n)
                    .map(|i| ReviewItem {
                        item_id: format!("it{i}"),
                        model_id: if i % 2 == 0 { "a" } else { "b" }.into(),
                        gap: format!("gap {i}"),
                        future_direction: Some("do more".into()),
                        evidence: None,
                        warrant: None,
                        bucket: None,
                        category: None,
                    })
                    .collect(),
            }],
        }
    }

    fn line(item: &str, verdict: &str, justification: Option<&str>, reviewer: &str) -> String {
        let mut v = serde_json::json!({
            "item_id": item, "gap_verdict": verdict, "direction_verdict": "agree",
            "note": "", "reviewer_tag": reviewer, "timestamp": "2026-01-05T10:00:00Z"
        });
        if let Some(j) = justification {
            v["justification"] = j.into();
        }
        v.to_string()
    }

    #[test]
    fn five_of_six_agree() {
        let mut lines: Vec<String> = (0..5)
            .map(|i| line(&format!("it{i}"), "agree", None, "r1"))
            .collect();
        lines.push(line("it5", "disagree", Some("outdated"), "r1"));
        lines.push(r#"{"summary": {"gap_agree": 83.3}}"#.into());
        let (js, sup) = parse_judgments(&lines.join("\n")).unwrap();
        let r = validation_report(&bundle(6), &js, sup).unwrap();
        assert_eq!(r.gap.agree_pct, 83.3);
        assert_eq!(r.gap.disagree_pct, 16.7);
        assert_eq!(r.items_judged, 6);
        assert_eq!(r.coverage_pct, 100.0);
        assert_eq!(r.justifications["outdated"], 1);
        assert_eq!(r.by_model["a"].judged, 3);
    }

    #[test]
    fn disagree_needs_justification() {
        let err = parse_judgments(&line("it0", "disagree", None, "r1")).unwrap_err();
        assert!(err.to_string().contains("justification"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn later_save_supersedes() {
        let text = [
            line("it0", "disagree", Some("irrelevance"), "r1"),
            line("it0", "agree", None, "r2"),
            line("it0", "partial", None, "r1"),
        ]
        .join("\n");
        let (js, sup) = parse_judgments(&text).unwrap();
        assert_eq!(sup, 1);
        assert_eq!(js.len(), 2);
        assert_eq!(js[0].gap_verdict, GapVerdict::Partial);
        let r = validation_report(&bundle(2), &js, sup).unwrap();
        assert_eq!(r.items_judged, 1);
        assert_eq!(r.coverage_pct, 50.0);
    }

    #[test]
    fn empty_import_has_zero_coverage() {
        let (js, sup) = parse_judgments("").unwrap();
        let r = validation_report(&bundle(4), &js, sup).unwrap();
        assert_eq!(r.items_total, 4);
        assert_eq!(r.coverage_pct, 0.0);
        assert_eq!(r.gap.agree_pct, 0.0);
    }

    #[test]
    fn unknown_item_rejected() {
        let (js, sup) = parse_judgments(&line("zzz", "agree", None, "r1")).unwrap();
        assert!(validation_report(&bundle(1), &js, sup).is_err());
    }
}
