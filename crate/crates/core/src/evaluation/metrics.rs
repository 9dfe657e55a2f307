//! Precision, recall and F1 over match rows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::matching::{MatchResult, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Sum counts over documents, then divide (micro average).
    Pooled,
    /// Average per-document P/R/F1 (macro average).
    PerDocument,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRow {
    pub doc_ref: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub scope: Scope,
    pub threshold: f64,
    pub per_document: Vec<DocumentRow>,
}

/// (precision, recall, f1) with 0 for any empty denominator.
pub fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f1 = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    (p, r, f1)
}

fn counts<'a>(rows: impl IntoIterator<Item = &'a MatchResult>) -> (usize, usize, usize) {
    rows.into_iter()
        .fold((0, 0, 0), |(tp, fp, fn_), r| match r.outcome {
            Outcome::TruePositive => (tp + 1, fp, fn_),
            Outcome::FalsePositive => (tp, fp + 1, fn_),
            Outcome::FalseNegative => (tp, fp, fn_ + 1),
        })
}

/// Aggregates match rows; per-document rows are always included, sorted by
/// `doc_ref`.
pub fn aggregate_prf(matches: &[MatchResult], scope: Scope, threshold: f64) -> MetricsReport {
    let mut by_doc: BTreeMap<&str, Vec<&MatchResult>> = BTreeMap::new();
    for m in matches {
        by_doc.entry(m.doc_ref.as_str()).or_default().push(m);
    }
    let per_document: Vec<DocumentRow> = by_doc
        .into_iter()
        .map(|(doc, rows)| {
            let (tp, fp, fn_) = counts(rows);
            let (precision, recall, f1) = prf(tp, fp, fn_);
            DocumentRow {
                doc_ref: doc.to_string(),
                tp,
                fp,
                fn_,
                precision,
                recall,
                f1,
            }
        })
        .collect();

    let (tp, fp, fn_) = counts(matches);
    let (precision, recall, f1) = match scope {
        Scope::Pooled => prf(tp, fp, fn_),
        Scope::PerDocument if per_document.is_empty() => (0.0, 0.0, 0.0),
        Scope::PerDocument => {
            let n = per_document.len() as f64;
            let mean = |f: fn(&DocumentRow) -> f64| per_document.iter().map(f).sum::<f64>() / n;
            (mean(|d| d.precision), mean(|d| d.recall), mean(|d| d.f1))
        }
    };
    MetricsReport {
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
        scope,
        threshold,
        per_document,
    }
}
