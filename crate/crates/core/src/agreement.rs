//! Cross-model agreement: near-duplicate clustering, Venn region counts,
//! unique-vs-shared tallies and per-category profiles.
//!
//! Clusters are built by complete-linkage agglomeration cut at the similarity
//! threshold. Every cluster is therefore a similarity clique, and because the
//! merge order does not depend on the threshold, raising it can only split
//! clusters.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::GapCategory;
use crate::evaluation::cues::{classify_category, CueDictionary};
use crate::evaluation::rouge::{lcs_len, RougeScorer};

pub const DEFAULT_CLUSTER_THRESHOLD: f64 = 0.55;
pub const MAX_REGION_MODELS: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AgreementError {
    #[error("region enumeration needs 2 to {MAX_REGION_MODELS} models, got {0}; use pairwise overlap instead")]
    ModelCount(usize),
    #[error("model `{0}` listed twice")]
    DuplicateModel(String),
}

/// One model output entering the clustering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub model_id: String,
    pub pred_ref: String,
    pub text: String,
}

impl Prediction {
    pub fn new(
        model_id: impl Into<String>,
        pred_ref: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        Self {
            model_id: model_id.into(),
            pred_ref: pred_ref.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusterMember {
    pub model_id: String,
    pub pred_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionCluster {
    pub cluster_id: String,
    pub members: Vec<ClusterMember>,
    pub representative: String,
    pub model_set: BTreeSet<String>,
}

struct Item<'a> {
    pred: &'a Prediction,
    canonical: String,
    tokens: Vec<String>,
}

fn similarity(a: &Item<'_>, b: &Item<'_>) -> f64 {
    if a.canonical == b.canonical {
        return 1.0;
    }
    let (m, n) = (a.tokens.len(), b.tokens.len());
    if m == 0 || n == 0 {
        return 0.0;
    }
    let l = lcs_len(&a.tokens, &b.tokens);
    if l == 0 {
        return 0.0;
    }
    let (p, r) = (l as f64 / m as f64, l as f64 / n as f64);
    2.0 * p * r / (p + r)
}

/// Cheap upper bound on ROUGE-L F1: shared-token multiset size stands in for
/// the LCS length.
fn bag_bound(a: &HashMap<&str, usize>, alen: usize, b: &HashMap<&str, usize>, blen: usize) -> f64 {
    if alen == 0 || blen == 0 {
        return 0.0;
    }
    let common: usize = a.iter().map(|(t, &c)| c.min(*b.get(t).unwrap_or(&0))).sum();
    2.0 * common as f64 / (alen + blen) as f64
}

/// Groups near-duplicate predictions across (and within) models.
///
/// Texts are normalized with the scorer's normalizer; identical normalized
/// texts always share a cluster. Output is sorted by representative and
/// cluster ids follow that order.
pub fn cluster_predictions(
    preds: &[Prediction],
    sim_threshold: f64,
    scorer: &RougeScorer,
) -> Vec<PredictionCluster> {
    let mut items: Vec<Item<'_>> = preds
        .iter()
        .map(|p| {
            let tokens = scorer.tokens(&p.text);
            Item {
                canonical: tokens.join(" "),
                tokens,
                pred: p,
            }
        })
        .collect();
    items.sort_by(|a, b| {
        a.canonical
            .cmp(&b.canonical)
            .then_with(|| a.pred.model_id.cmp(&b.pred.model_id))
            .then_with(|| a.pred.pred_ref.cmp(&b.pred.pred_ref))
    });

    // exact groups: consecutive runs of equal canonical text
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, it) in items.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if items[g[0]].canonical == it.canonical => g.push(i),
            _ => groups.push(vec![i]),
        }
    }

    // similarity edges between groups (group representatives suffice, since
    // members of one group are token-identical)
    let bags: Vec<HashMap<&str, usize>> = groups
        .iter()
        .map(|g| {
            let mut bag = HashMap::new();
            for t in &items[g[0]].tokens {
                *bag.entry(t.as_str()).or_insert(0) += 1;
            }
            bag
        })
        .collect();
    let n = groups.len();
    let mut edges: Vec<HashMap<usize, f64>> = vec![HashMap::new(); n];
    for a in 0..n {
        let ia = &items[groups[a][0]];
        for b in a + 1..n {
            let ib = &items[groups[b][0]];
            if bag_bound(&bags[a], ia.tokens.len(), &bags[b], ib.tokens.len()) < sim_threshold {
                continue;
            }
            let s = similarity(ia, ib);
            if s >= sim_threshold {
                edges[a].insert(b, s);
                edges[b].insert(a, s);
            }
        }
    }

    let mut merged: Vec<Vec<usize>> = Vec::new();
    for component in components(&edges) {
        for cl in complete_link(&component, &edges, sim_threshold) {
            merged.push(
                cl.into_iter()
                    .flat_map(|g| groups[g].iter().copied())
                    .collect(),
            );
        }
    }

    let mut clusters: Vec<(usize, Vec<usize>)> = merged
        .into_iter()
        .map(|mut idxs| {
            idxs.sort_unstable();
            (idxs[0], idxs)
        })
        .collect();
    // items are sorted by (canonical, model, ref), so the smallest index is
    // the representative and ordering by it orders by representative
    clusters.sort_by_key(|c| c.0);
    let width = clusters.len().to_string().len().max(4);
    clusters
        .into_iter()
        .enumerate()
        .map(|(k, (rep, idxs))| {
            let mut members: Vec<ClusterMember> = idxs
                .iter()
                .map(|&i| ClusterMember {
                    model_id: items[i].pred.model_id.clone(),
                    pred_ref: items[i].pred.pred_ref.clone(),
                })
                .collect();
            members.sort();
            PredictionCluster {
                cluster_id: format!("cl{:0width$}", k + 1),
                model_set: members.iter().map(|m| m.model_id.clone()).collect(),
                members,
                representative: items[rep].pred.text.clone(),
            }
        })
        .collect()
}

fn components(edges: &[HashMap<usize, f64>]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; edges.len()];
    let mut out = Vec::new();
    for start in 0..edges.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut comp = Vec::new();
        while let Some(v) = stack.pop() {
            comp.push(v);
            for &w in edges[v].keys() {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Complete-linkage agglomeration inside one connected component. Ties go to
/// the pair of clusters with the lexicographically smallest lowest members.
fn complete_link(
    nodes: &[usize],
    edges: &[HashMap<usize, f64>],
    threshold: f64,
) -> Vec<Vec<usize>> {
    let k = nodes.len();
    if k == 1 {
        return vec![nodes.to_vec()];
    }
    // linkage[i][j]: min pairwise similarity, 0 when some pair is below threshold
    let mut link = vec![vec![0.0f64; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i != j {
                link[i][j] = edges[nodes[i]].get(&nodes[j]).copied().unwrap_or(0.0);
            }
        }
    }
    let mut members: Vec<Option<Vec<usize>>> = nodes.iter().map(|&n| Some(vec![n])).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..k {
            if members[i].is_none() {
                continue;
            }
            for j in i + 1..k {
                if members[j].is_none() || link[i][j] < threshold {
                    continue;
                }
                // slots keep their lowest node, and nodes are ascending, so
                // (i, j) order is the tie-break order
                if best.is_none_or(|(s, _, _)| link[i][j] > s) {
                    best = Some((link[i][j], i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        let absorbed = members[j].take().expect("live cluster");
        members[i].as_mut().expect("live cluster").extend(absorbed);
        let merged: Vec<f64> = link[i]
            .iter()
            .zip(&link[j])
            .map(|(a, b)| a.min(*b))
            .collect();
        for (x, &m) in merged.iter().enumerate() {
            link[i][x] = m;
            link[x][i] = m;
        }
    }
    members.into_iter().flatten().collect()
}

fn region_key(models: &[&str]) -> String {
    let mut sorted = models.to_vec();
    sorted.sort_unstable();
    sorted.join("&")
}

/// Venn counts keyed by the sorted model subset joined with `&`. All
/// 2^n - 1 regions are present, zeros included. Clusters sharing no model
/// with `models` are left out.
pub fn overlap_regions(
    clusters: &[PredictionCluster],
    models: &[String],
) -> Result<BTreeMap<String, usize>, AgreementError> {
    if !(2..=MAX_REGION_MODELS).contains(&models.len()) {
        return Err(AgreementError::ModelCount(models.len()));
    }
    let mut uniq = BTreeSet::new();
    for m in models {
        if !uniq.insert(m.as_str()) {
            return Err(AgreementError::DuplicateModel(m.clone()));
        }
    }
    let mut regions = BTreeMap::new();
    for mask in 1u32..(1 << models.len()) {
        let subset: Vec<&str> = (0..models.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| models[i].as_str())
            .collect();
        regions.insert(region_key(&subset), 0usize);
    }
    for c in clusters {
        let present: Vec<&str> = models
            .iter()
            .filter(|m| c.model_set.contains(*m))
            .map(String::as_str)
            .collect();
        if !present.is_empty() {
            *regions
                .get_mut(&region_key(&present))
                .expect("all regions seeded") += 1;
        }
    }
    Ok(regions)
}

/// Clusters containing both models, for every unordered pair; works for any
/// number of models.
pub fn pairwise_overlap(
    clusters: &[PredictionCluster],
    models: &[String],
) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for (i, a) in models.iter().enumerate() {
        for b in &models[i + 1..] {
            let n = clusters
                .iter()
                .filter(|c| c.model_set.contains(a) && c.model_set.contains(b))
                .count();
            out.insert(region_key(&[a, b]), n);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniqueShared {
    pub unique: usize,
    pub shared: usize,
}

pub fn unique_vs_shared(clusters: &[PredictionCluster]) -> BTreeMap<String, UniqueShared> {
    let mut out: BTreeMap<String, UniqueShared> = BTreeMap::new();
    for c in clusters {
        for m in &c.model_set {
            let e = out.entry(m.clone()).or_default();
            if c.model_set.len() == 1 {
                e.unique += 1;
            } else {
                e.shared += 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupCounts {
    pub raw: usize,
    pub deduplicated: usize,
}

/// Per-model totals before and after dropping exact-normalized repeats.
pub fn dedup_counts(preds: &[Prediction], scorer: &RougeScorer) -> BTreeMap<String, DedupCounts> {
    let mut seen: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    let mut out: BTreeMap<String, DedupCounts> = BTreeMap::new();
    for p in preds {
        out.entry(p.model_id.clone()).or_default().raw += 1;
        seen.entry(&p.model_id)
            .or_default()
            .insert(scorer.normalizer().canonical(&p.text));
    }
    for (m, texts) in seen {
        out.get_mut(m).expect("model counted").deduplicated = texts.len();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    /// Per-category counts in [`GapCategory::ALL`] order.
    pub counts: [usize; 5],
    /// Counts divided by the per-category maximum across models.
    pub normalized: [f64; 5],
    pub uncategorized: usize,
}

pub fn category_profile(
    preds_by_model: &BTreeMap<String, Vec<String>>,
    dictionary: &CueDictionary,
) -> BTreeMap<String, ProfileRow> {
    let mut rows: BTreeMap<String, ProfileRow> = preds_by_model
        .iter()
        .map(|(model, texts)| {
            let mut counts = [0usize; 5];
            let mut uncategorized = 0;
            for t in texts {
                match classify_category(t, dictionary) {
                    Some(c) => counts[c.index()] += 1,
                    None => uncategorized += 1,
                }
            }
            (
                model.clone(),
                ProfileRow {
                    counts,
                    normalized: [0.0; 5],
                    uncategorized,
                },
            )
        })
        .collect();
    for axis in 0..5 {
        let max = rows.values().map(|r| r.counts[axis]).max().unwrap_or(0);
        if max > 0 {
            for r in rows.values_mut() {
                r.normalized[axis] = r.counts[axis] as f64 / max as f64;
            }
        }
    }
    rows
}

/// CSV: one row per model, normalized values per category, then the
/// uncategorized count.
pub fn profile_csv(rows: &BTreeMap<String, ProfileRow>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model".to_string()];
    header.extend(GapCategory::ALL.iter().map(|c| c.as_str().to_string()));
    header.push("uncategorized".into());
    w.write_record(&header).expect("csv write");
    for (model, r) in rows {
        let mut rec = vec![model.clone()];
        rec.extend(r.normalized.iter().map(|v| v.to_string()));
        rec.push(r.uncategorized.to_string());
        w.write_record(&rec).expect("csv write");
    }
    String::from_utf8(w.into_inner().expect("csv flush")).expect("utf-8 csv")
}
