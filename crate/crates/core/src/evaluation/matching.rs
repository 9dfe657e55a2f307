//! One-to-one prediction/gold matching on ROUGE-L scores.

use serde::{Deserialize, Serialize};

use super::rouge::RougeScorer;
use super::Comparator;

pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.55;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Repeatedly take the best remaining pair.
    Greedy,
    /// Maximum total score over passing pairs (Hungarian algorithm).
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub threshold: f64,
    pub comparator: Comparator,
    pub mode: MatchMode,
    pub use_stemming: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_MATCH_THRESHOLD,
            comparator: Comparator::Ge,
            mode: MatchMode::Greedy,
            use_stemming: true,
        }
    }
}

impl MatchConfig {
    pub fn passes(&self, score: f64) -> bool {
        self.comparator.passes(score, self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub text: String,
}

impl Candidate {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    FalseNegative,
}

/// One row of a matching: a matched pair, or a leftover on either side.
///
/// Leftover rows carry the best score against the *unmatched* other side
/// (0 if there is none), which is always below the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    #[serde(default)]
    pub doc_ref: String,
    pub pred_ref: Option<String>,
    pub gold_ref: Option<String>,
    pub score: f64,
    pub exact: bool,
    pub outcome: Outcome,
}

/// Index-level result of matching a score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// (pred, gold, score), in selection order.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_golds: Vec<usize>,
}

/// Matches rows (predictions) to columns (golds) of `scores`.
///
/// Greedy mode visits passing pairs by descending score, breaking ties on the
/// lower prediction index and then the lower gold index.
pub fn assign(scores: &[Vec<f64>], n_golds: usize, cfg: &MatchConfig) -> Assignment {
    let pairs = match cfg.mode {
        MatchMode::Greedy => greedy(scores, n_golds, cfg),
        MatchMode::Optimal => optimal(scores, n_golds, cfg),
    };
    let mut pred_used = vec![false; scores.len()];
    let mut gold_used = vec![false; n_golds];
    for &(p, g, _) in &pairs {
        pred_used[p] = true;
        gold_used[g] = true;
    }
    Assignment {
        pairs,
        unmatched_preds: (0..scores.len()).filter(|&p| !pred_used[p]).collect(),
        unmatched_golds: (0..n_golds).filter(|&g| !gold_used[g]).collect(),
    }
}

fn greedy(scores: &[Vec<f64>], n_golds: usize, cfg: &MatchConfig) -> Vec<(usize, usize, f64)> {
    let mut cells: Vec<(usize, usize, f64)> = Vec::new();
    for (p, row) in scores.iter().enumerate() {
        for (g, &s) in row.iter().enumerate().take(n_golds) {
            if cfg.passes(s) {
                cells.push((p, g, s));
            }
        }
    }
    cells.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut pred_used = vec![false; scores.len()];
    let mut gold_used = vec![false; n_golds];
    let mut pairs = Vec::new();
    for (p, g, s) in cells {
        if !pred_used[p] && !gold_used[g] {
            pred_used[p] = true;
            gold_used[g] = true;
            pairs.push((p, g, s));
        }
    }
    pairs
}

fn optimal(scores: &[Vec<f64>], n_golds: usize, cfg: &MatchConfig) -> Vec<(usize, usize, f64)> {
    let n_preds = scores.len();
    if n_preds == 0 || n_golds == 0 {
        return Vec::new();
    }
    let weight = |p: usize, g: usize| {
        let s = scores[p][g];
        if cfg.passes(s) {
            s
        } else {
            0.0
        }
    };
    let transpose = n_preds > n_golds;
    let (rows, cols) = if transpose {
        (n_golds, n_preds)
    } else {
        (n_preds, n_golds)
    };
    let cost: Vec<Vec<f64>> = (0..rows)
        .map(|r| {
            (0..cols)
                .map(|c| {
                    if transpose {
                        -weight(c, r)
                    } else {
                        -weight(r, c)
                    }
                })
                .collect()
        })
        .collect();
    let mut pairs: Vec<(usize, usize, f64)> = hungarian_min(&cost)
        .into_iter()
        .enumerate()
        .map(|(r, c)| if transpose { (c, r) } else { (r, c) })
        .filter(|&(p, g)| cfg.passes(scores[p][g]))
        .map(|(p, g)| (p, g, scores[p][g]))
        .collect();
    pairs.sort_by_key(|&(p, g, _)| (p, g));
    pairs
}

/// Minimum-cost assignment of every row to a distinct column; needs
/// rows <= cols. Returns the column chosen for each row.
fn hungarian_min(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let m = cost[0].len();
    debug_assert!(n <= m);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Scores every (pred, gold) pair with ROUGE-L and matches one-to-one.
///
/// Rows come out in prediction order (TP or FP), followed by false negatives
/// in gold order.
pub fn match_one_to_one(
    preds: &[Candidate],
    golds: &[Candidate],
    cfg: &MatchConfig,
) -> Vec<MatchResult> {
    let scorer = RougeScorer::new(cfg.use_stemming);
    match_with_scorer(&scorer, preds, golds, cfg)
}

pub fn match_with_scorer(
    scorer: &RougeScorer,
    preds: &[Candidate],
    golds: &[Candidate],
    cfg: &MatchConfig,
) -> Vec<MatchResult> {
    let pred_texts: Vec<&str> = preds.iter().map(|c| c.text.as_str()).collect();
    let gold_texts: Vec<&str> = golds.iter().map(|c| c.text.as_str()).collect();
    let scores = scorer.matrix(&pred_texts, &gold_texts);
    let assignment = assign(&scores, golds.len(), cfg);

    let mut gold_of_pred: Vec<Option<(usize, f64)>> = vec![None; preds.len()];
    for &(p, g, s) in &assignment.pairs {
        gold_of_pred[p] = Some((g, s));
    }
    let best_over = |vals: &mut dyn Iterator<Item = f64>| vals.fold(0.0f64, f64::max);
    let plain = crate::text::Normalizer::plain();

    let mut rows = Vec::with_capacity(preds.len() + assignment.unmatched_golds.len());
    for (p, pred) in preds.iter().enumerate() {
        rows.push(match gold_of_pred[p] {
            Some((g, score)) => MatchResult {
                doc_ref: String::new(),
                pred_ref: Some(pred.id.clone()),
                gold_ref: Some(golds[g].id.clone()),
                score,
                exact: plain.canonical(&pred.text) == plain.canonical(&golds[g].text),
                outcome: Outcome::TruePositive,
            },
            None => MatchResult {
                doc_ref: String::new(),
                pred_ref: Some(pred.id.clone()),
                gold_ref: None,
                score: best_over(&mut assignment.unmatched_golds.iter().map(|&g| scores[p][g])),
                exact: false,
                outcome: Outcome::FalsePositive,
            },
        });
    }
    for &g in &assignment.unmatched_golds {
        rows.push(MatchResult {
            doc_ref: String::new(),
            pred_ref: None,
            gold_ref: Some(golds[g].id.clone()),
            score: best_over(&mut assignment.unmatched_preds.iter().map(|&p| scores[p][g])),
            exact: false,
            outcome: Outcome::FalseNegative,
        });
    }
    rows
}
