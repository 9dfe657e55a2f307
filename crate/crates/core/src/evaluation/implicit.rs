//! Implicit-gap scoring: does any inferred claim entail, and get entailed
//! by, a masked gold conclusion?

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::entailment::{score_pairs, Combiner, NliScorer};
use super::{Comparator, EvalError};
use crate::corpus::GoldGap;
use crate::tabi::{Bucket, TabiInference};

pub const DEFAULT_ENTAILMENT_THRESHOLD: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImplicitConfig {
    pub threshold: f64,
    pub comparator: Comparator,
    pub combiner: Combiner,
    /// Also require warrant↔premise to pass before a claim counts.
    pub strict: bool,
}

impl Default for ImplicitConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_ENTAILMENT_THRESHOLD,
            comparator: Comparator::Gt,
            combiner: Combiner::Min,
            strict: false,
        }
    }
}

impl ImplicitConfig {
    pub fn passes(&self, score: f64) -> bool {
        self.comparator.passes(score, self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimScore {
    pub claim_index: usize,
    pub bucket: Bucket,
    /// Best combined claim↔gold score and the gold it came from.
    pub best_gold_score: f64,
    pub best_gold_ref: String,
    pub warrant_score: f64,
    pub warrant_grounded: bool,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicitUnitResult {
    pub unit_ref: String,
    pub model_id: String,
    pub unit_correct: bool,
    /// Bucket of the first matching claim, in output order.
    pub match_bucket: Option<Bucket>,
    pub matched_claim_index: Option<usize>,
    pub matched_gold_ref: Option<String>,
    pub claims: Vec<ClaimScore>,
}

impl ImplicitUnitResult {
    pub fn count_bucket(&self, bucket: Bucket) -> usize {
        self.claims.iter().filter(|c| c.bucket == bucket).count()
    }
}

/// Scores one unit. An empty inference list is simply incorrect.
pub fn score_implicit(
    unit_ref: &str,
    model_id: &str,
    inferences: &[TabiInference],
    golds: &[GoldGap],
    premise: &str,
    cfg: &ImplicitConfig,
    scorer: &dyn NliScorer,
) -> Result<ImplicitUnitResult, EvalError> {
    if golds.is_empty() {
        return Err(EvalError::NoGold(unit_ref.to_string()));
    }
    // one batch: for each claim, (claim→gold, gold→claim) per gold, then
    // (warrant→premise, premise→warrant)
    let per_claim = golds.len() * 2 + 2;
    let mut pairs: Vec<(String, String)> = Vec::with_capacity(inferences.len() * per_claim);
    for inf in inferences {
        for g in golds {
            pairs.push((inf.claim.clone(), g.text.clone()));
            pairs.push((g.text.clone(), inf.claim.clone()));
        }
        pairs.push((inf.warrant.clone(), premise.to_string()));
        pairs.push((premise.to_string(), inf.warrant.clone()));
    }
    let scores = score_pairs(scorer, &pairs)?;

    let mut claims = Vec::with_capacity(inferences.len());
    for (i, (inf, s)) in inferences.iter().zip(scores.chunks(per_claim)).enumerate() {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for g in 0..golds.len() {
            let combined = cfg.combiner.combine(s[2 * g], s[2 * g + 1]);
            if combined > best.0 {
                best = (combined, g);
            }
        }
        let warrant_score = cfg.combiner.combine(s[per_claim - 2], s[per_claim - 1]);
        let warrant_grounded = cfg.passes(warrant_score);
        let matched = cfg.passes(best.0) && (!cfg.strict || warrant_grounded);
        claims.push(ClaimScore {
            claim_index: i,
            bucket: inf.bucket,
            best_gold_score: best.0,
            best_gold_ref: golds[best.1].gap_id.clone(),
            warrant_score,
            warrant_grounded,
            matched,
        });
    }
    let first = claims.iter().find(|c| c.matched);
    Ok(ImplicitUnitResult {
        unit_ref: unit_ref.to_string(),
        model_id: model_id.to_string(),
        unit_correct: first.is_some(),
        match_bucket: first.map(|c| c.bucket),
        matched_claim_index: first.map(|c| c.claim_index),
        matched_gold_ref: first.map(|c| c.best_gold_ref.clone()),
        claims,
    })
}

/// (correct count, accuracy as a fraction); 0 for empty input.
pub fn implicit_accuracy(results: &[ImplicitUnitResult]) -> (usize, f64) {
    let flags: Vec<bool> = results.iter().map(|r| r.unit_correct).collect();
    count_accuracy(&flags)
}

fn count_accuracy(flags: &[bool]) -> (usize, f64) {
    let correct = flags.iter().filter(|&&b| b).count();
    let acc = if flags.is_empty() {
        0.0
    } else {
        correct as f64 / flags.len() as f64
    };
    (correct, acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnionAccuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// A unit counts once if any model got it right. Every model must cover the
/// same unit set.
pub fn union_accuracy(
    per_model: &BTreeMap<String, BTreeMap<String, bool>>,
) -> Result<UnionAccuracy, EvalError> {
    let mut models = per_model.iter();
    let Some((first_model, first)) = models.next() else {
        return Ok(UnionAccuracy {
            correct: 0,
            total: 0,
            accuracy: 0.0,
        });
    };
    let units: BTreeSet<&String> = first.keys().collect();
    for (model, results) in models {
        let other: BTreeSet<&String> = results.keys().collect();
        if other != units {
            let diff: Vec<&&String> = units.symmetric_difference(&other).take(5).collect();
            return Err(EvalError::UnitSetMismatch(format!(
                "{first_model} vs {model}, differing units {diff:?}"
            )));
        }
    }
    let flags: Vec<bool> = units
        .iter()
        .map(|u| per_model.values().any(|m| m[*u]))
        .collect();
    let (correct, accuracy) = count_accuracy(&flags);
    Ok(UnionAccuracy {
        correct,
        total: flags.len(),
        accuracy,
    })
}

/// [`union_accuracy`] over scored results, grouped by model and unit.
pub fn union_from_results(results: &[ImplicitUnitResult]) -> Result<UnionAccuracy, EvalError> {
    let mut per_model: BTreeMap<String, BTreeMap<String, bool>> = BTreeMap::new();
    for r in results {
        per_model
            .entry(r.model_id.clone())
            .or_default()
            .insert(r.unit_ref.clone(), r.unit_correct);
    }
    union_accuracy(&per_model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub correct_more: usize,
    pub correct_least: usize,
    /// Inferences emitted per bucket, across all units.
    pub total_more: usize,
    pub total_least: usize,
    /// Absent when there are no correct units.
    pub least_fraction_of_correct: Option<f64>,
}

pub fn calibration(results: &[ImplicitUnitResult]) -> CalibrationReport {
    let correct = |b: Bucket| results.iter().filter(|r| r.match_bucket == Some(b)).count();
    let total = |b: Bucket| results.iter().map(|r| r.count_bucket(b)).sum();
    let correct_more = correct(Bucket::MoreProbable);
    let correct_least = correct(Bucket::LeastProbable);
    let denom = correct_more + correct_least;
    CalibrationReport {
        correct_more,
        correct_least,
        total_more: total(Bucket::MoreProbable),
        total_least: total(Bucket::LeastProbable),
        least_fraction_of_correct: (denom > 0).then(|| correct_least as f64 / denom as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::GapKind;
    use crate::evaluation::entailment::MockNliScorer;

    const PREMISE: &str = "Premise text.";

    fn gold(id: &str, text: &str) -> GoldGap {
        GoldGap {
            gap_id: id.into(),
            text: text.into(),
            kind: GapKind::Implicit,
            category: None,
            unit_ref: "u".into(),
            flags: Default::default(),
        }
    }

    fn inf(claim: &str, warrant: &str, bucket: Bucket) -> TabiInference {
        TabiInference {
            unit_ref: "u".into(),
            model_id: "m".into(),
            claim: claim.into(),
            grounds: vec!["g".into()],
            warrant: warrant.into(),
            bucket,
        }
    }

    fn result(unit: &str, model: &str, bucket: Option<Bucket>) -> ImplicitUnitResult {
        ImplicitUnitResult {
            unit_ref: unit.into(),
            model_id: model.into(),
            unit_correct: bucket.is_some(),
            match_bucket: bucket,
            matched_claim_index: None,
            matched_gold_ref: None,
            claims: Vec::new(),
        }
    }

    #[test]
    fn threshold_is_strict() {
        let scorer = MockNliScorer::new()
            .with("C1", "G", 0.41)
            .with("C2", "G", 0.4);
        let cfg = ImplicitConfig::default();
        let golds = [gold("g0", "G")];
        let r = score_implicit(
            "u",
            "m",
            &[inf("C1", "W", Bucket::MoreProbable)],
            &golds,
            PREMISE,
            &cfg,
            &scorer,
        )
        .unwrap();
        assert!(r.unit_correct);
        let r = score_implicit(
            "u",
            "m",
            &[inf("C2", "W", Bucket::MoreProbable)],
            &golds,
            PREMISE,
            &cfg,
            &scorer,
        )
        .unwrap();
        assert!(!r.unit_correct);
        assert_eq!(r.match_bucket, None);
    }

    #[test]
    fn least_probable_match_is_recorded() {
        let scorer = MockNliScorer::new()
            .with("C2", "G2", 0.8)
            .with("W2", PREMISE, 0.1);
        let golds = [gold("g1", "G1"), gold("g2", "G2")];
        let infs = [
            inf("C1", "W1", Bucket::MoreProbable),
            inf("C2", "W2", Bucket::LeastProbable),
        ];
        let r = score_implicit(
            "u",
            "m",
            &infs,
            &golds,
            PREMISE,
            &ImplicitConfig::default(),
            &scorer,
        )
        .unwrap();
        assert!(r.unit_correct);
        assert_eq!(r.match_bucket, Some(Bucket::LeastProbable));
        assert_eq!(r.matched_claim_index, Some(1));
        assert_eq!(r.matched_gold_ref.as_deref(), Some("g2"));
        assert!(!r.claims[1].warrant_grounded);

        let strict = ImplicitConfig {
            strict: true,
            ..ImplicitConfig::default()
        };
        let r = score_implicit("u", "m", &infs, &golds, PREMISE, &strict, &scorer).unwrap();
        assert!(!r.unit_correct);
    }

    #[test]
    fn min_combiner_uses_weaker_direction() {
        let scorer = MockNliScorer::new().with_directed("C", "G", 0.9, 0.3);
        let golds = [gold("g", "G")];
        let infs = [inf("C", "W", Bucket::MoreProbable)];
        let min = score_implicit(
            "u",
            "m",
            &infs,
            &golds,
            PREMISE,
            &ImplicitConfig::default(),
            &scorer,
        )
        .unwrap();
        assert!(!min.unit_correct);
        let mean_cfg = ImplicitConfig {
            combiner: Combiner::Mean,
            ..ImplicitConfig::default()
        };
        let mean = score_implicit("u", "m", &infs, &golds, PREMISE, &mean_cfg, &scorer).unwrap();
        assert!(mean.unit_correct);
    }

    #[test]
    fn empty_golds_error() {
        let scorer = MockNliScorer::new();
        let err = score_implicit(
            "u7",
            "m",
            &[],
            &[],
            PREMISE,
            &ImplicitConfig::default(),
            &scorer,
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::NoGold(u) if u == "u7"));
    }

    #[test]
    fn accuracy_arithmetic() {
        let mk = |c: usize, n: usize| -> Vec<ImplicitUnitResult> {
            (0..n)
                .map(|i| {
                    result(
                        &format!("u{i}"),
                        "m",
                        (i < c).then_some(Bucket::MoreProbable),
                    )
                })
                .collect()
        };
        let (c, a) = implicit_accuracy(&mk(179, 212));
        assert_eq!(c, 179);
        assert_eq!(format!("{:.2}", a * 100.0), "84.43");
        let (c, a) = implicit_accuracy(&mk(618, 973));
        assert_eq!(c, 618);
        assert_eq!(format!("{:.2}", a * 100.0), "63.51");
        assert_eq!(implicit_accuracy(&mk(0, 10)), (0, 0.0));
        assert_eq!(implicit_accuracy(&[]), (0, 0.0));
    }

    #[test]
    fn union_cases() {
        let model = |correct: &[&str]| -> BTreeMap<String, bool> {
            ["u1", "u2", "u3", "u4"]
                .iter()
                .map(|u| (u.to_string(), correct.contains(u)))
                .collect()
        };
        let per_model = BTreeMap::from([
            ("A".to_string(), model(&["u1", "u2"])),
            ("B".to_string(), model(&["u2", "u3"])),
        ]);
        let u = union_accuracy(&per_model).unwrap();
        assert_eq!((u.correct, u.total, u.accuracy), (3, 4, 0.75));

        let mut mismatched = per_model.clone();
        mismatched.get_mut("B").unwrap().remove("u4");
        assert!(matches!(
            union_accuracy(&mismatched),
            Err(EvalError::UnitSetMismatch(_))
        ));
    }

    #[test]
    fn calibration_fraction() {
        let mut rs: Vec<_> = (0..9)
            .map(|i| result(&format!("u{i}"), "m", Some(Bucket::MoreProbable)))
            .collect();
        rs.push(result("u9", "m", Some(Bucket::LeastProbable)));
        rs.push(result("u10", "m", None));
        let c = calibration(&rs);
        assert_eq!((c.correct_more, c.correct_least), (9, 1));
        assert_eq!(c.least_fraction_of_correct, Some(0.1));
        assert_eq!(calibration(&rs[..9]).least_fraction_of_correct, Some(0.0));
        assert_eq!(calibration(&rs[10..]).least_fraction_of_correct, None);
    }
}
