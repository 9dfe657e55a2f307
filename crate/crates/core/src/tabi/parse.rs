//! Parsers for raw model output.
//!
//! The preferred contract is a fenced JSON block. When a model drifts from
//! JSON, a labeled-lines fallback (`Claim:`, `Grounds:`, `Warrant:`,
//! `Bucket:`) is tried. Parsing never fails: malformed records become
//! [`Diagnostic`]s and the batch moves on.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{Bucket, ExtractedStatement, FulltextGapPair, TabiInference};
use crate::segmentation::{RuleSplitter, SentenceSplitter};
use crate::text::normalize_whitespace;

/// Identifiers stamped onto every parsed record.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParseContext<'a> {
    pub unit_ref: &'a str,
    pub model_id: &'a str,
}

impl<'a> ParseContext<'a> {
    pub fn new(unit_ref: &'a str, model_id: &'a str) -> Self {
        Self { unit_ref, model_id }
    }
}

/// Why one block of output was discarded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// Zero-based index of the offending record (or block).
    pub block: usize,
    pub message: String,
}

impl Diagnostic {
    fn new(block: usize, message: impl Into<String>) -> Self {
        Self {
            block,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parsed<T> {
    pub items: Vec<T>,
    pub diagnostics: Vec<Diagnostic>,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Self {
            items: Vec::new(),
            diagnostics: Vec::new(),
        }
    }
}

pub const NO_PARSEABLE_BLOCK: &str = "no parseable block";

/// Parses Claim/Grounds/Warrant/Bucket records.
pub fn parse_tabi_output(raw: &str, ctx: &ParseContext<'_>) -> Parsed<TabiInference> {
    let mut out = Parsed::default();
    let records = match json_values(raw) {
        Some(values) => values.iter().flat_map(tabi_records).collect(),
        None => labeled_blocks(raw, &TABI_LABELS, "claim")
            .into_iter()
            .map(block_to_record)
            .collect::<Vec<_>>(),
    };
    let splitter = RuleSplitter::default();
    for (idx, rec) in records.iter().enumerate() {
        match tabi_from_record(rec, ctx, &splitter) {
            Ok(inf) => out.items.push(inf),
            Err(msg) => out.diagnostics.push(Diagnostic::new(idx, msg)),
        }
    }
    if out.items.is_empty() && out.diagnostics.is_empty() {
        out.diagnostics.push(Diagnostic::new(0, NO_PARSEABLE_BLOCK));
    }
    out
}

/// Parses a list of explicit gap statements.
///
/// Accepts a JSON array of strings (or of `{text}` objects), an object with a
/// `statements` array, or bullet/numbered lines. An explicit empty answer
/// (`[]`, `none`) yields no items and no diagnostic.
pub fn parse_statements(raw: &str, ctx: &ParseContext<'_>) -> Parsed<ExtractedStatement> {
    let mut out = Parsed::default();
    let trimmed = raw.trim();
    let lowered = trimmed.trim_end_matches('.').to_lowercase();
    if matches!(lowered.as_str(), "none" | "n/a" | "no statements" | "[]") {
        return out;
    }
    let texts: Vec<Result<String, String>> = match json_values(raw) {
        Some(values) => values.iter().flat_map(statement_values).collect(),
        None => bullet_lines(raw).into_iter().map(Ok).collect(),
    };
    let found_json = json_values(raw).is_some();
    for (idx, t) in texts.into_iter().enumerate() {
        match t {
            Ok(text) if !text.is_empty() => out.items.push(ExtractedStatement {
                text,
                unit_ref: ctx.unit_ref.to_string(),
                model_id: ctx.model_id.to_string(),
                matched_cues: Vec::new(),
                category: None,
            }),
            Ok(_) => out
                .diagnostics
                .push(Diagnostic::new(idx, "empty statement")),
            Err(msg) => out.diagnostics.push(Diagnostic::new(idx, msg)),
        }
    }
    if out.items.is_empty() && out.diagnostics.is_empty() && !found_json {
        out.diagnostics.push(Diagnostic::new(0, NO_PARSEABLE_BLOCK));
    }
    out
}

/// Parses document-level (gap, future direction) pairs.
pub fn parse_gap_pairs(raw: &str, ctx: &ParseContext<'_>) -> Parsed<FulltextGapPair> {
    let mut out = Parsed::default();
    let records: Vec<Map<String, Value>> = match json_values(raw) {
        Some(values) => values
            .iter()
            .flat_map(|v| record_list(v, &["pairs", "gaps", "items", "results"]))
            .collect(),
        None => labeled_blocks(raw, &PAIR_LABELS, "gap")
            .into_iter()
            .map(block_to_record)
            .collect(),
    };
    for (idx, rec) in records.iter().enumerate() {
        let gap = text_field(
            rec,
            &[
                "gap",
                "implied_gap",
                "knowledge_gap",
                "implied_knowledge_gap",
            ],
        );
        let direction = text_field(
            rec,
            &[
                "future_direction",
                "direction",
                "future",
                "suggested_future_direction",
            ],
        );
        let evidence = text_field(rec, &["evidence", "support", "quote"]);
        match (gap, direction) {
            (Some(gap), Some(future_direction)) => out.items.push(FulltextGapPair {
                gap,
                future_direction,
                evidence,
                doc_ref: ctx.unit_ref.to_string(),
            }),
            (None, _) => out.diagnostics.push(Diagnostic::new(idx, "missing gap")),
            (_, None) => out
                .diagnostics
                .push(Diagnostic::new(idx, "missing future direction")),
        }
    }
    if out.items.is_empty() && out.diagnostics.is_empty() {
        out.diagnostics.push(Diagnostic::new(0, NO_PARSEABLE_BLOCK));
    }
    out
}

const TABI_LABELS: [(&str, &str); 4] = [
    ("claim", "claim"),
    ("grounds", "grounds"),
    ("warrant", "warrant"),
    ("bucket", "bucket"),
];

const PAIR_LABELS: [(&str, &str); 5] = [
    ("gap", "gap"),
    ("implied gap", "gap"),
    ("future direction", "future_direction"),
    ("suggested future direction", "future_direction"),
    ("evidence", "evidence"),
];

fn tabi_from_record(
    rec: &Map<String, Value>,
    ctx: &ParseContext<'_>,
    splitter: &RuleSplitter,
) -> Result<TabiInference, String> {
    let claim = text_field(rec, &["claim", "gap", "implied_gap"]).ok_or("missing claim")?;
    let grounds = list_field(rec, &["grounds", "ground", "evidence"]);
    if grounds.is_empty() {
        return Err("missing grounds".into());
    }
    let warrant = text_field(rec, &["warrant"]).ok_or("missing warrant")?;
    let bucket_raw =
        text_field(rec, &["bucket", "probability", "confidence"]).ok_or("missing bucket")?;
    let bucket: Bucket = bucket_raw.parse()?;
    if splitter.split(&warrant).len() != 1 {
        return Err("warrant must be a single sentence".into());
    }
    Ok(TabiInference {
        unit_ref: ctx.unit_ref.to_string(),
        model_id: ctx.model_id.to_string(),
        claim,
        grounds,
        warrant,
        bucket,
    })
}

/// Every JSON value found in the output: fenced blocks first, then the whole
/// text, then the widest bracketed span. `None` when nothing parses.
fn json_values(raw: &str) -> Option<Vec<Value>> {
    let fenced: Vec<Value> = fenced_blocks(raw)
        .iter()
        .filter_map(|b| serde_json::from_str::<Value>(b.trim()).ok())
        .filter(|v| v.is_object() || v.is_array())
        .collect();
    if !fenced.is_empty() {
        return Some(fenced);
    }
    let trimmed = raw.trim();
    if let Ok(v) = serde_json::from_str::<Value>(trimmed) {
        if v.is_object() || v.is_array() {
            return Some(vec![v]);
        }
    }
    let start = trimmed.find(['{', '['])?;
    let end = trimmed.rfind(['}', ']'])?;
    if end <= start {
        return None;
    }
    serde_json::from_str::<Value>(&trimmed[start..=end])
        .ok()
        .filter(|v| v.is_object() || v.is_array())
        .map(|v| vec![v])
}

fn fenced_blocks(raw: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<String> = None;
    for line in raw.lines() {
        let t = line.trim_start();
        if t.starts_with("```") {
            match current.take() {
                Some(body) => blocks.push(body),
                None => current = Some(String::new()),
            }
        } else if let Some(body) = current.as_mut() {
            body.push_str(line);
            body.push('\n');
        }
    }
    blocks
}

/// Flattens a JSON value into candidate inference records.
fn tabi_records(value: &Value) -> Vec<Map<String, Value>> {
    // {"more_probable": [...], "least_probable": [...]} layout
    if let Value::Object(map) = value {
        let mut bucketed = Vec::new();
        for (key, items) in map {
            if let (Ok(bucket), Value::Array(list)) = (key.parse::<Bucket>(), items) {
                for item in list {
                    if let Value::Object(rec) = item {
                        let mut rec = rec.clone();
                        rec.entry("bucket")
                            .or_insert_with(|| Value::String(bucket.as_str().into()));
                        bucketed.push(rec);
                    }
                }
            }
        }
        if !bucketed.is_empty() {
            return bucketed;
        }
    }
    record_list(value, &["inferences", "claims", "results", "items", "gaps"])
}

fn record_list(value: &Value, container_keys: &[&str]) -> Vec<Map<String, Value>> {
    match value {
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::Object(m) => m.clone(),
                other => {
                    // keep position so diagnostics stay aligned
                    let mut m = Map::new();
                    m.insert("_raw".into(), other.clone());
                    m
                }
            })
            .collect(),
        Value::Object(map) => {
            for key in container_keys {
                if let Some(inner @ Value::Array(_)) = lookup(map, key) {
                    return record_list(inner, container_keys);
                }
            }
            vec![map.clone()]
        }
        _ => Vec::new(),
    }
}

fn statement_values(value: &Value) -> Vec<Result<String, String>> {
    let items = match value {
        Value::Array(items) => items.clone(),
        Value::Object(map) => {
            match ["statements", "gaps", "items", "results"]
                .iter()
                .find_map(|k| lookup(map, k))
            {
                Some(Value::Array(items)) => items.clone(),
                _ => vec![value.clone()],
            }
        }
        _ => return Vec::new(),
    };
    items
        .iter()
        .map(|item| match item {
            Value::String(s) => Ok(clean_text(s)),
            Value::Object(m) => text_field(m, &["text", "statement", "gap"])
                .ok_or_else(|| "statement object without text".to_string()),
            _ => Err("unexpected statement value".into()),
        })
        .collect()
}

fn lookup<'a>(map: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    map.iter()
        .find(|(k, _)| {
            k.trim().eq_ignore_ascii_case(key)
                || k.trim().to_lowercase().replace([' ', '-'], "_") == key
        })
        .map(|(_, v)| v)
}

fn text_field(map: &Map<String, Value>, keys: &[&str]) -> Option<String> {
    keys.iter().find_map(|k| match lookup(map, k) {
        Some(Value::String(s)) => Some(clean_text(s)).filter(|s| !s.is_empty()),
        Some(Value::Array(items)) if items.len() == 1 => {
            items[0].as_str().map(clean_text).filter(|s| !s.is_empty())
        }
        _ => None,
    })
}

fn list_field(map: &Map<String, Value>, keys: &[&str]) -> Vec<String> {
    for k in keys {
        match lookup(map, k) {
            Some(Value::String(s)) => {
                let s = clean_text(s);
                if !s.is_empty() {
                    return vec![s];
                }
            }
            Some(Value::Array(items)) => {
                let list: Vec<String> = items
                    .iter()
                    .filter_map(Value::as_str)
                    .map(clean_text)
                    .filter(|s| !s.is_empty())
                    .collect();
                if !list.is_empty() {
                    return list;
                }
            }
            _ => {}
        }
    }
    Vec::new()
}

fn clean_text(s: &str) -> String {
    let t = normalize_whitespace(s);
    let quotes: &[char] = &['"', '\u{201c}', '\u{201d}'];
    let inner = t.trim_matches(quotes);
    // only strip when the quotes wrap the whole text
    if inner.len() + 2 <= t.len() && !inner.contains(quotes) {
        inner.trim().to_string()
    } else {
        t
    }
}

type LabeledBlock = BTreeMap<&'static str, Vec<String>>;

/// Groups `Label: value` lines into blocks; `opener` starts a new block.
fn labeled_blocks(raw: &str, labels: &[(&str, &'static str)], opener: &str) -> Vec<LabeledBlock> {
    let mut blocks: Vec<LabeledBlock> = Vec::new();
    let mut current: Option<LabeledBlock> = None;
    let mut last_field: Option<&'static str> = None;

    for line in raw.lines() {
        let stripped = strip_list_marker(line.trim());
        if stripped.is_empty() {
            continue;
        }
        if let Some((field, value)) = match_label(stripped, labels) {
            if field == opener || current.is_none() {
                if let Some(done) = current.take() {
                    blocks.push(done);
                }
                current = Some(LabeledBlock::new());
            }
            let block = current.as_mut().expect("block open");
            let entry = block.entry(field).or_default();
            if !value.is_empty() {
                entry.push(value.to_string());
            }
            last_field = Some(field);
        } else if let (Some(block), Some(field)) = (current.as_mut(), last_field) {
            let entry = block.entry(field).or_default();
            let is_item = line.trim_start().starts_with(['-', '*', '\u{2022}'])
                || starts_numbered(line.trim_start());
            match entry.last_mut() {
                Some(last) if !is_item => {
                    last.push(' ');
                    last.push_str(stripped);
                }
                _ => entry.push(stripped.to_string()),
            }
        }
    }
    if let Some(done) = current {
        blocks.push(done);
    }
    blocks
}

fn block_to_record(block: LabeledBlock) -> Map<String, Value> {
    block
        .into_iter()
        .map(|(k, v)| {
            let value = if k == "grounds" {
                Value::Array(v.into_iter().map(Value::String).collect())
            } else {
                Value::String(v.join(" "))
            };
            (k.to_string(), value)
        })
        .collect()
}

fn match_label<'a>(
    line: &'a str,
    labels: &[(&str, &'static str)],
) -> Option<(&'static str, &'a str)> {
    let colon = line.find(':')?;
    let head = line[..colon].trim().trim_matches('*').trim().to_lowercase();
    let rest = line[colon + 1..].trim().trim_start_matches('*').trim();
    labels
        .iter()
        .find(|(label, _)| head == *label)
        .map(|(_, field)| (*field, rest))
}

fn strip_list_marker(line: &str) -> &str {
    let t = line
        .trim_start_matches(['-', '*', '\u{2022}', '#'])
        .trim_start();
    if starts_numbered(t) {
        let after = t.trim_start_matches(|c: char| c.is_ascii_digit());
        after[1..].trim_start()
    } else {
        t
    }
}

fn starts_numbered(t: &str) -> bool {
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    digits > 0
        && matches!(t[digits..].chars().next(), Some('.') | Some(')'))
        && t[digits + 1..].starts_with(char::is_whitespace)
}

fn bullet_lines(raw: &str) -> Vec<String> {
    raw.lines()
        .map(str::trim)
        .filter(|l| l.starts_with(['-', '*', '\u{2022}']) || starts_numbered(l))
        .map(|l| clean_text(strip_list_marker(l)))
        .filter(|l| !l.is_empty())
        .collect()
}
