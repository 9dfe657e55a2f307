//! Acceptance checks. Runs without the libtest harness and prints one
//! `PASS`/`FAIL` line per criterion; exits non-zero if any check fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use gapscope_core::agreement::{
    cluster_predictions, overlap_regions, unique_vs_shared, Prediction,
};
use gapscope_core::evaluation::implicit::{implicit_accuracy, union_accuracy, ImplicitUnitResult};
use gapscope_core::evaluation::matching::{assign, MatchConfig, DEFAULT_MATCH_THRESHOLD};
use gapscope_core::evaluation::{
    classify_category, lcs_len, rouge_l_f1, rouge_l_tokens, CueDictionary, RougeScorer,
};
use gapscope_core::orchestrator::evaluate::percent2;
use gapscope_core::segmentation::{chunk_word_counts, DEFAULT_CHUNK_BUDGET};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(limit: Duration, start: Instant) -> Check {
    let took = start.elapsed();
    ensure!(took < limit, "took {:.2?}, limit {:.0?}", took, limit);
    Ok(())
}

// ---------------------------------------------------------------- fixtures

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

/// Copies a flat fixture directory into a fresh temp dir.
fn stage(name: &str) -> TempDir {
    let tmp = TempDir::new().expect("tempdir");
    for entry in fs::read_dir(fixture(name)).expect("fixture dir") {
        let path = entry.expect("entry").path();
        if path.is_file() {
            fs::copy(&path, tmp.path().join(path.file_name().unwrap())).expect("copy");
        }
    }
    tmp
}

/// Runs the binary in `dir`. Proxies point at a closed port so any stray
/// HTTP request fails loudly.
fn gapscope(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gapscope"))
        .args(args)
        .current_dir(dir)
        .env("HTTP_PROXY", "http://127.0.0.1:9")
        .env("HTTPS_PROXY", "http://127.0.0.1:9")
        .env("ALL_PROXY", "http://127.0.0.1:9")
        .output()
        .map_err(|e| format!("spawn: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "gapscope {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn extract_and_evaluate(dir: &Path) -> Result<String, String> {
    let out = gapscope(dir, &["extract", "--config", "config.json"])?;
    gapscope(dir, &["evaluate", "--config", "config.json"])?;
    Ok(out)
}

fn csv_rows(path: &Path) -> Result<Vec<BTreeMap<String, String>>, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    rdr.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())
}

fn row_for<'a>(
    rows: &'a [BTreeMap<String, String>],
    model: &str,
) -> Result<&'a BTreeMap<String, String>, String> {
    rows.iter()
        .find(|r| r["model"] == model)
        .ok_or_else(|| format!("no row for {model}"))
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn read_jsonl(path: &Path) -> Result<Vec<Value>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}

// ------------------------------------------------------------------ rouge

/// Id of a binary sequence: a leading 1 bit marks the length.
fn seq_id(seq: &[u8]) -> usize {
    seq.iter()
        .enumerate()
        .fold(1usize << seq.len(), |acc, (i, &b)| {
            acc | ((b as usize) << i)
        })
}

/// Every subsequence of `seq`, as a 512-bit set of ids.
fn subsequence_set(seq: &[u8]) -> [u64; 8] {
    let mut set = [0u64; 8];
    for mask in 0u32..(1 << seq.len()) {
        let sub: Vec<u8> = (0..seq.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| seq[i])
            .collect();
        let id = seq_id(&sub);
        set[id / 64] |= 1 << (id % 64);
    }
    set
}

/// Longest common subsequence by set intersection: longer sequences have
/// larger ids, so the highest shared id has the LCS length.
fn lcs_by_sets(a: &[u64; 8], b: &[u64; 8]) -> usize {
    for word in (0..8).rev() {
        let both = a[word] & b[word];
        if both != 0 {
            let id = word * 64 + 63 - both.leading_zeros() as usize;
            return (usize::BITS - 1 - id.leading_zeros()) as usize;
        }
    }
    unreachable!("the empty sequence is always shared")
}

fn is_subsequence<T: PartialEq>(sub: &[&T], of: &[T]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|x| it.any(|y| y == *x))
}

fn lcs_by_enumeration<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let n = mask.count_ones() as usize;
        if n <= best {
            continue;
        }
        let sub: Vec<&T> = (0..a.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| &a[i])
            .collect();
        if is_subsequence(&sub, b) {
            best = n;
        }
    }
    best
}

fn oracle_f1(lcs: usize, m: usize, n: usize) -> f64 {
    if lcs == 0 || m == 0 || n == 0 {
        return 0.0;
    }
    let p = lcs as f64 / m as f64;
    let r = lcs as f64 / n as f64;
    2.0 * p * r / (p + r)
}

fn rouge_oracle() -> Check {
    let start = Instant::now();
    let mut seqs: Vec<Vec<u8>> = Vec::new();
    for len in 0..=8usize {
        for bits in 0u32..(1 << len) {
            seqs.push((0..len).map(|i| ((bits >> i) & 1) as u8).collect());
        }
    }
    let sets: Vec<[u64; 8]> = seqs.iter().map(|s| subsequence_set(s)).collect();
    let mut pairs = 0usize;
    for (a, sa) in seqs.iter().zip(&sets) {
        for (b, sb) in seqs.iter().zip(&sets) {
            let want = lcs_by_sets(sa, sb);
            let got = lcs_len(a, b);
            ensure!(got == want, "lcs {a:?} vs {b:?}: got {got}, oracle {want}");
            let f = rouge_l_tokens(a, b);
            let w = oracle_f1(want, a.len(), b.len());
            ensure!(
                f.to_bits() == w.to_bits(),
                "f1 {a:?} vs {b:?}: got {f}, oracle {w}"
            );
            pairs += 1;
        }
    }
    ensure!(pairs == 511 * 511, "enumerated {pairs} pairs");

    const WORDS: [&str; 6] = ["moss", "lake", "soil", "bird", "heat", "seed"];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..1000 {
        let draw = |rng: &mut ChaCha8Rng| -> Vec<&str> {
            let len = rng.random_range(0..=12usize);
            (0..len)
                .map(|_| WORDS[rng.random_range(0..WORDS.len())])
                .collect()
        };
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let want = lcs_by_enumeration(&a, &b);
        ensure!(lcs_len(&a, &b) == want, "lcs {a:?} vs {b:?}");
        let w = oracle_f1(want, a.len(), b.len());
        let f = rouge_l_f1(&a.join(" "), &b.join(" "), false);
        ensure!(
            f.to_bits() == w.to_bits(),
            "text f1 {a:?} vs {b:?}: got {f}, oracle {w}"
        );
    }
    within(Duration::from_secs(10), start)
}

// ---------------------------------------------------------------- matcher

fn greedy_oracle(scores: &[Vec<f64>], n_golds: usize, threshold: f64) -> Vec<(usize, usize)> {
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (i, row) in scores.iter().enumerate() {
        for (j, &s) in row.iter().enumerate().take(n_golds) {
            if s >= threshold {
                cand.push((s, i, j));
            }
        }
    }
    cand.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut used_p, mut used_g) = (BTreeSet::new(), BTreeSet::new());
    let mut out = Vec::new();
    for (_, i, j) in cand {
        if !used_p.contains(&i) && !used_g.contains(&j) {
            used_p.insert(i);
            used_g.insert(j);
            out.push((i, j));
        }
    }
    out
}

fn matcher_invariants() -> Check {
    let start = Instant::now();
    let cfg = MatchConfig::default();
    ensure!(
        cfg.threshold == 0.55 && DEFAULT_MATCH_THRESHOLD == 0.55,
        "default threshold {}",
        cfg.threshold
    );
    let mut boundary_hits = 0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let np = rng.random_range(0..=5usize);
        let ng = rng.random_range(0..=5usize);
        // twentieths force ties and scores sitting exactly on the threshold
        let scores: Vec<Vec<f64>> = (0..np)
            .map(|_| {
                (0..ng)
                    .map(|_| rng.random_range(0..=20u32) as f64 / 20.0)
                    .collect()
            })
            .collect();
        let a = assign(&scores, ng, &cfg);

        let preds: BTreeSet<usize> = a.pairs.iter().map(|p| p.0).collect();
        let golds: BTreeSet<usize> = a.pairs.iter().map(|p| p.1).collect();
        ensure!(
            preds.len() == a.pairs.len() && golds.len() == a.pairs.len(),
            "seed {seed}: not one-to-one"
        );
        for &(i, j, s) in &a.pairs {
            ensure!(
                s >= 0.55 && s == scores[i][j],
                "seed {seed}: pair ({i},{j}) score {s}"
            );
            if s == 0.55 {
                boundary_hits += 1;
            }
        }
        ensure!(
            a.pairs.len() + a.unmatched_preds.len() == np,
            "seed {seed}: predictions not conserved"
        );
        ensure!(
            a.pairs.len() + a.unmatched_golds.len() == ng,
            "seed {seed}: golds not conserved"
        );
        ensure!(
            a.unmatched_preds.iter().all(|i| !preds.contains(i))
                && a.unmatched_golds.iter().all(|j| !golds.contains(j)),
            "seed {seed}: leftovers overlap matches"
        );
        for &i in &a.unmatched_preds {
            for &j in &a.unmatched_golds {
                ensure!(
                    scores[i][j] < 0.55,
                    "seed {seed}: passing pair ({i},{j}) left unmatched"
                );
            }
        }
        let got: Vec<(usize, usize)> = a.pairs.iter().map(|p| (p.0, p.1)).collect();
        let want = greedy_oracle(&scores, ng, 0.55);
        ensure!(got == want, "seed {seed}: got {got:?}, oracle {want:?}");
    }
    ensure!(
        boundary_hits > 0,
        "no instance exercised a score of exactly 0.55"
    );
    within(Duration::from_secs(5), start)
}

// ---------------------------------------------------------------- chunker

fn chunker_invariants() -> Check {
    let start = Instant::now();
    let budget = DEFAULT_CHUNK_BUDGET;
    ensure!(budget == 1000, "default budget {budget}");
    let mut oversize_seen = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(0..=80usize);
        let mut counts: Vec<usize> = (0..n)
            .map(|_| {
                if rng.random_bool(0.04) {
                    rng.random_range(budget + 1..=budget + 600)
                } else {
                    rng.random_range(1..=60)
                }
            })
            .collect();
        if seed % 10 == 0 && n > 0 {
            let at = rng.random_range(0..n);
            counts[at] = budget + 1 + seed as usize;
        }
        let parent = format!("sec{seed}");
        let chunks = chunk_word_counts(&parent, &counts, budget);
        ensure!(
            chunks == chunk_word_counts(&parent, &counts, budget),
            "seed {seed}: not deterministic"
        );
        if n == 0 {
            ensure!(
                chunks.is_empty(),
                "seed {seed}: chunks for an empty section"
            );
            continue;
        }
        let mut next = 0;
        for (k, c) in chunks.iter().enumerate() {
            ensure!(
                c.ordinal == k && c.chunk_id == format!("{parent}#c{k}"),
                "seed {seed}: ordinal {k}"
            );
            ensure!(
                c.start == next && c.end >= c.start,
                "seed {seed}: chunk {k} starts at {}",
                c.start
            );
            let words: usize = counts[c.start..=c.end].iter().sum();
            ensure!(c.word_count == words, "seed {seed}: chunk {k} word count");
            ensure!(
                words <= budget || c.start == c.end,
                "seed {seed}: chunk {k} over budget"
            );
            if words > budget {
                oversize_seen += 1;
            }
            if c.end + 1 < n {
                ensure!(
                    words + counts[c.end + 1] > budget,
                    "seed {seed}: chunk {k} closed early"
                );
            }
            next = c.end + 1;
        }
        ensure!(next == n, "seed {seed}: sentences {next}..{n} not covered");
        for (i, &wc) in counts.iter().enumerate() {
            if wc > budget {
                ensure!(
                    chunks.iter().any(|c| c.start == i && c.end == i),
                    "seed {seed}: oversize sentence {i} shares a chunk"
                );
            }
        }
    }
    ensure!(
        oversize_seen >= 10,
        "only {oversize_seen} oversize chunks generated"
    );
    within(Duration::from_secs(5), start)
}

// ------------------------------------------------------------- end to end

fn close(got: f64, want: f64) -> bool {
    (got - want).abs() <= 1e-9
}

fn explicit_end_to_end() -> Check {
    let tmp = stage("explicit_demo");
    let dir = tmp.path();
    let cfg = read_json(&dir.join("config.json"))?;
    let providers: Vec<&str> = cfg["models"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["provider"].as_str().unwrap())
        .collect();
    ensure!(
        providers.iter().all(|p| *p == "mock"),
        "fixture uses providers {providers:?}"
    );

    let cold = extract_and_evaluate(dir)?;
    ensure!(cold.contains("backend_calls=5"), "cold run: {cold}");
    let reports = dir.join("run").join("reports");
    let json = read_json(&reports.join("explicit_metrics.json"))?;
    let m = &json["models"][0]["metrics"];
    ensure!(
        m["tp"] == 3 && m["fp"] == 1 && m["fn"] == 2,
        "json counts {m}"
    );
    let (p, r, f) = (
        m["precision"].as_f64().unwrap(),
        m["recall"].as_f64().unwrap(),
        m["f1"].as_f64().unwrap(),
    );
    ensure!(
        close(p, 0.75) && close(r, 0.60) && close(f, 2.0 / 3.0),
        "json P/R/F1 {p} {r} {f}"
    );

    let rows = csv_rows(&reports.join("explicit_metrics.csv"))?;
    let row = row_for(&rows, "model-a")?;
    ensure!(
        row["tp"] == "3" && row["fp"] == "1" && row["fn"] == "2",
        "csv counts {row:?}"
    );
    let num = |k: &str| row[k].parse::<f64>().unwrap_or(f64::NAN);
    ensure!(
        close(num("precision"), 0.75) && close(num("recall"), 0.60) && close(num("f1"), 2.0 / 3.0),
        "csv P/R/F1 {row:?}"
    );

    let warm = gapscope(dir, &["extract", "--config", "config.json"])?;
    ensure!(
        warm.contains("backend_calls=0") && warm.contains("cache_hits=5"),
        "warm run: {warm}"
    );
    Ok(())
}

fn implicit_end_to_end() -> Check {
    let tmp = stage("implicit_demo");
    let dir = tmp.path();
    extract_and_evaluate(dir)?;
    let reports = dir.join("run").join("reports");

    let rows = csv_rows(&reports.join("implicit_accuracy.csv"))?;
    let a = row_for(&rows, "tabi-a")?;
    ensure!(
        a["correct"] == "9" && a["total"] == "12" && a["accuracy_pct"] == "75.00",
        "tabi-a row {a:?}"
    );

    let units = read_jsonl(&reports.join("units").join("tabi-a.jsonl"))?;
    ensure!(units.len() == 12, "{} unit rows", units.len());
    let by_ref: BTreeMap<String, &Value> = units
        .iter()
        .map(|u| (u["unit_ref"].as_str().unwrap().to_string(), u))
        .collect();
    for i in 1..=12 {
        let u = by_ref[&format!("para{i:02}")];
        let (want_correct, want_bucket) = match i {
            1..=7 => (true, Some("more_probable")),
            8 | 9 => (true, Some("least_probable")),
            _ => (false, None),
        };
        ensure!(
            u["unit_correct"] == want_correct && u["match_bucket"].as_str() == want_bucket,
            "para{i:02}: correct {} bucket {}",
            u["unit_correct"],
            u["match_bucket"]
        );
    }
    let boundary = by_ref["para10"]["claims"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["best_gold_score"].as_f64() == Some(0.4))
        .ok_or("para10 has no claim scoring exactly 0.4")?;
    ensure!(
        boundary["matched"] == false,
        "a claim at exactly 0.4 matched"
    );

    let cal = csv_rows(&reports.join("implicit_calibration.csv"))?;
    let c = row_for(&cal, "tabi-a")?;
    ensure!(
        c["correct_more"] == "7" && c["correct_least"] == "2",
        "calibration {c:?}"
    );
    let frac: f64 = c["least_fraction_of_correct"]
        .parse()
        .map_err(|e| format!("{e}"))?;
    ensure!(close(frac, 2.0 / 9.0), "least-probable fraction {frac}");
    Ok(())
}

// ------------------------------------------------------------- arithmetic

fn unit(model: &str, i: usize, correct: bool) -> ImplicitUnitResult {
    ImplicitUnitResult {
        unit_ref: format!("u{i}"),
        model_id: model.into(),
        unit_correct: correct,
        match_bucket: None,
        matched_claim_index: None,
        matched_gold_ref: None,
        claims: Vec::new(),
    }
}

fn accuracy_arithmetic() -> Check {
    for (correct, total, want) in [(179usize, 212usize, "84.43"), (618, 973, "63.51")] {
        let results: Vec<ImplicitUnitResult> =
            (0..total).map(|i| unit("m", i, i < correct)).collect();
        let (n, acc) = implicit_accuracy(&results);
        ensure!(n == correct, "counted {n} of {correct}");
        let shown = percent2(acc);
        ensure!(
            shown == want,
            "{correct}/{total} shown as {shown}, expected {want}"
        );
    }
    Ok(())
}

fn union_monotonicity() -> Check {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n_models = rng.random_range(2..=5usize);
        let n_units = rng.random_range(1..=40usize);
        let mut per_model: BTreeMap<String, BTreeMap<String, bool>> = BTreeMap::new();
        for m in 0..n_models {
            let p = rng.random_range(0.0..1.0);
            let flags = (0..n_units)
                .map(|u| (format!("u{u:02}"), rng.random_bool(p)))
                .collect();
            per_model.insert(format!("model{m}"), flags);
        }
        let union = union_accuracy(&per_model).map_err(|e| e.to_string())?;
        let mut best = 0.0f64;
        for (name, flags) in &per_model {
            let single = BTreeMap::from([(name.clone(), flags.clone())]);
            best = best.max(union_accuracy(&single).map_err(|e| e.to_string())?.accuracy);
        }
        ensure!(
            union.accuracy >= best,
            "seed {seed}: union {} below best single {best}",
            union.accuracy
        );
        ensure!(
            union.total == n_units,
            "seed {seed}: union total {}",
            union.total
        );
    }
    Ok(())
}

// ------------------------------------------------------------------- cues

fn cue_names(dict: &CueDictionary, sentence: &str) -> Vec<String> {
    dict.matches(sentence).into_iter().map(|m| m.cue).collect()
}

fn cue_validation() -> Check {
    let dict = CueDictionary::load(fixture("cues50.csv")).map_err(|e| e.to_string())?;
    ensure!(dict.len() == 50, "dictionary has {} cues", dict.len());

    for (sentence, cue) in [
        ("The long-term fate of buried seeds REMAINS UNKNOWN.", "remains unknown"),
        ("Its role in soil respiration remained unknown for decades.", "remains unknown"),
        ("So far there have been No Randomized Controlled Trials of this therapy in older adults.", "no randomized controlled trial"),
    ] {
        let got = cue_names(&dict, sentence);
        ensure!(got.iter().any(|c| c == cue), "`{sentence}` missed `{cue}`, got {got:?}");
    }

    let cases: [(&str, &[&str]); 9] = [
        (
            "How drought alters root exudation remains unknown, and further research is needed.",
            &["remains unknown", "further research"],
        ),
        ("Surprisingly, the treated plots grew more slowly.", &["surprisingly"]),
        (
            "Because the survey was costly and time consuming, only a small sample of ponds was visited.",
            &["small sample", "costly", "time consuming"],
        ),
        ("Nesting success was measured at a single center and the evidence is indirect.", &["single center"]),
        ("The Mechanism Is Unclear.", &["is unclear"]),
        (
            "These results were inconsistent with earlier models and remain unexplained.",
            &["inconsistent with", "remains unexplained"],
        ),
        ("Sediment cores were dated with radiocarbon.", &[]),
        (
            "Future studies should be explored with better sensors, although access is hard.",
            &["future studies", "should be explored"],
        ),
        (
            "It is not well characterized why the anomalous readings appear, which paradoxically made the work technically challenging.",
            &["not well characterized", "technically challenging", "paradoxically", "anomalous"],
        ),
    ];
    for (sentence, want) in cases {
        let got = cue_names(&dict, sentence);
        ensure!(got == want, "`{sentence}`: got {got:?}, expected {want:?}");
    }
    for (sentence, want) in [
        (cases[2].0, "barrier"),
        (cases[8].0, "anomaly_curious_finding"),
        (cases[6].0, "none"),
    ] {
        let got = classify_category(sentence, &dict).map_or("none", |c| c.as_str());
        ensure!(
            got == want,
            "`{sentence}` classified {got}, expected {want}"
        );
    }
    Ok(())
}

// -------------------------------------------------------------- agreement

fn agreement_conservation() -> Check {
    const FILLER: [&str; 4] = ["indeed", "clearly", "notably", "overall"];
    let letters: Vec<char> = ('a'..='z').collect();
    let models: Vec<String> = (1..=4).map(|i| format!("m{i}")).collect();
    let mut preds = Vec::new();
    for k in 0..20usize {
        let base: Vec<String> = (0..5)
            .map(|j| format!("z{}{}q", letters[k], letters[j]))
            .collect();
        let mask = k % 15 + 1;
        for (i, model) in models.iter().enumerate() {
            if mask & (1 << i) != 0 {
                let text = format!("{} {}", base.join(" "), FILLER[i]);
                preds.push(Prediction::new(model, format!("t{k}"), text));
            }
        }
    }
    let clusters = cluster_predictions(&preds, 0.55, &RougeScorer::new(true));
    ensure!(clusters.len() == 20, "{} clusters", clusters.len());

    let regions = overlap_regions(&clusters, &models).map_err(|e| e.to_string())?;
    ensure!(regions.len() == 15, "{} region keys", regions.len());
    ensure!(
        regions.values().sum::<usize>() == 20,
        "regions sum to {}",
        regions.values().sum::<usize>()
    );
    let expected: BTreeMap<&str, usize> = [
        ("m1", 2),
        ("m2", 2),
        ("m1&m2", 2),
        ("m3", 2),
        ("m1&m3", 2),
        ("m2&m3", 1),
        ("m1&m2&m3", 1),
        ("m4", 1),
        ("m1&m4", 1),
        ("m2&m4", 1),
        ("m1&m2&m4", 1),
        ("m3&m4", 1),
        ("m1&m3&m4", 1),
        ("m2&m3&m4", 1),
        ("m1&m2&m3&m4", 1),
    ]
    .into_iter()
    .collect();
    let got: BTreeMap<&str, usize> = regions.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    ensure!(got == expected, "regions {got:?}");

    let split = unique_vs_shared(&clusters);
    for (model, unique, shared) in [("m1", 2, 9), ("m2", 2, 8), ("m3", 2, 8), ("m4", 1, 7)] {
        let s = split[model];
        let containing = clusters
            .iter()
            .filter(|c| c.model_set.contains(model))
            .count();
        ensure!(
            s.unique + s.shared == containing,
            "{model}: {s:?} vs {containing} clusters"
        );
        ensure!((s.unique, s.shared) == (unique, shared), "{model}: {s:?}");
    }
    Ok(())
}

// -------------------------------------------------------- reproducibility

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).expect("read dir") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = fs::read(&path).expect("read");
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), bytes);
            }
        }
    }
    out
}

fn reproducibility() -> Check {
    for name in ["explicit_demo", "implicit_demo"] {
        let tmp = stage(name);
        let dir = tmp.path();
        extract_and_evaluate(dir)?;
        let reports = dir.join("run").join("reports");
        extract_and_evaluate(dir)?;
        let first = snapshot(&reports);
        let warm = extract_and_evaluate(dir)?;
        ensure!(
            warm.contains("backend_calls=0"),
            "{name}: cache not warm: {warm}"
        );
        let second = snapshot(&reports);
        ensure!(!first.is_empty(), "{name}: no report files");
        ensure!(
            first.keys().eq(second.keys()),
            "{name}: report file sets differ"
        );
        for (path, bytes) in &first {
            ensure!(
                second[path] == *bytes,
                "{name}: {} differs between runs",
                path.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let checks: [Criterion; 10] = [
        ("rouge-l matches brute-force lcs oracle", rouge_oracle),
        ("greedy matcher invariants", matcher_invariants),
        ("chunker invariants", chunker_invariants),
        ("explicit fixture end to end", explicit_end_to_end),
        ("implicit fixture end to end", implicit_end_to_end),
        ("accuracy arithmetic", accuracy_arithmetic),
        ("union accuracy monotonicity", union_monotonicity),
        ("cue validation", cue_validation),
        ("agreement conservation", agreement_conservation),
        ("warm-cache reproducibility", reproducibility),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed().as_secs_f64();
        match result {
            Ok(()) => println!("PASS {name} ({took:.2}s)"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({took:.2}s): {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        checks.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
