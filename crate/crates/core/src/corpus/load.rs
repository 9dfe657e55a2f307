use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::types::*;
use super::CorpusError;
use crate::segmentation::{RuleSplitter, SentenceSplitter};

/// Highest interchange schema version this loader understands.
pub const SCHEMA_VERSION: u64 = 1;

/// Marker line opening a section in a plain-text document.
pub const SECTION_MARKER_PREFIX: &str = "---SECTION:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    ParagraphJsonl,
    SectionJsonl,
    FulltextDir,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paragraph_jsonl" => Ok(Self::ParagraphJsonl),
            "section_jsonl" => Ok(Self::SectionJsonl),
            "fulltext_dir" => Ok(Self::FulltextDir),
            other => Err(format!("unknown corpus format `{other}`")),
        }
    }
}

/// Loads a corpus with the default sentence splitter.
pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    load_corpus_with(path, format, &RuleSplitter::default())
}

pub fn load_corpus_with(
    path: impl AsRef<Path>,
    format: CorpusFormat,
    splitter: &dyn SentenceSplitter,
) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(CorpusError::Missing(path.to_path_buf()));
    }
    let mut builder = Builder::new(splitter);
    match format {
        CorpusFormat::ParagraphJsonl => {
            for (line_no, record) in jsonl_records(path)? {
                builder.paragraph_record(&record, &Loc::line(path, line_no))?;
            }
        }
        CorpusFormat::SectionJsonl => {
            for (line_no, record) in jsonl_records(path)? {
                builder.section_record(&record, &Loc::line(path, line_no))?;
            }
        }
        CorpusFormat::FulltextDir => {
            for file in text_files(path)? {
                let body = fs::read_to_string(&file).map_err(|e| CorpusError::io(&file, e))?;
                builder.fulltext(&file, &body)?;
            }
        }
    }
    builder.finish()
}

/// Parses JSON-lines text already in memory (paragraph or section records).
pub fn parse_jsonl(text: &str, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let origin = Path::new("<memory>");
    let splitter = RuleSplitter::default();
    let mut builder = Builder::new(&splitter);
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let loc = Loc::line(origin, idx + 1);
        let record = parse_object(line, &loc)?;
        match format {
            CorpusFormat::ParagraphJsonl => builder.paragraph_record(&record, &loc)?,
            CorpusFormat::SectionJsonl => builder.section_record(&record, &loc)?,
            CorpusFormat::FulltextDir => {
                return Err(CorpusError::malformed(
                    &loc,
                    "format",
                    "fulltext_dir is not a JSON-lines format",
                ))
            }
        }
    }
    builder.finish()
}

/// JSON object records with their 1-based line numbers.
type NumberedRecords = Vec<(usize, Map<String, Value>)>;

fn jsonl_records(path: &Path) -> Result<NumberedRecords, CorpusError> {
    if path.is_dir() {
        return Err(CorpusError::malformed(
            &Loc::file(path),
            "path",
            "expected a JSON-lines file, found a directory",
        ));
    }
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let loc = Loc::line(path, idx + 1);
        out.push((idx + 1, parse_object(line, &loc)?));
    }
    Ok(out)
}

fn parse_object(line: &str, loc: &Loc) -> Result<Map<String, Value>, CorpusError> {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(CorpusError::malformed(
            loc,
            "record",
            "expected a JSON object",
        )),
        Err(e) => Err(CorpusError::malformed(
            loc,
            "record",
            &format!("invalid JSON: {e}"),
        )),
    }
}

fn text_files(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    if !dir.is_dir() {
        return Err(CorpusError::malformed(
            &Loc::file(dir),
            "path",
            "fulltext_dir expects a directory",
        ));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CorpusError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    Ok(files)
}

/// Source position used in error messages.
pub(crate) struct Loc(String);

impl Loc {
    fn line(path: &Path, line: usize) -> Self {
        Loc(format!("{}:{line}", path.display()))
    }

    fn file(path: &Path) -> Self {
        Loc(path.display().to_string())
    }

    pub(crate) fn as_str(&self) -> &str {
        &self.0
    }
}

struct Builder<'a> {
    splitter: &'a dyn SentenceSplitter,
    documents: Vec<Document>,
    doc_index: HashMap<String, usize>,
    para_ids: HashSet<String>,
    gap_ids: HashSet<String>,
}

impl<'a> Builder<'a> {
    fn new(splitter: &'a dyn SentenceSplitter) -> Self {
        Self {
            splitter,
            documents: Vec::new(),
            doc_index: HashMap::new(),
            para_ids: HashSet::new(),
            gap_ids: HashSet::new(),
        }
    }

    fn finish(self) -> Result<Corpus, CorpusError> {
        Ok(Corpus {
            documents: self.documents,
        })
    }

    fn document_mut(
        &mut self,
        doc_id: &str,
        title: Option<String>,
        source: String,
    ) -> &mut Document {
        let idx = match self.doc_index.get(doc_id) {
            Some(&i) => i,
            None => {
                self.doc_index
                    .insert(doc_id.to_string(), self.documents.len());
                self.documents.push(Document {
                    doc_id: doc_id.to_string(),
                    title: None,
                    sections: Vec::new(),
                    source_tag: source,
                });
                self.documents.len() - 1
            }
        };
        let doc = &mut self.documents[idx];
        if doc.title.is_none() {
            doc.title = title;
        }
        doc
    }

    fn paragraph_record(&mut self, rec: &Map<String, Value>, loc: &Loc) -> Result<(), CorpusError> {
        check_version(rec, loc)?;
        let para_id = req_str(rec, "para_id", loc)?;
        let doc_id = opt_str(rec, "doc_id", loc)?.unwrap_or_else(|| para_id.clone());
        let section_id = opt_str(rec, "section_id", loc)?.unwrap_or_else(|| "main".to_string());
        let heading = opt_str(rec, "heading", loc)?;
        let title = opt_str(rec, "title", loc)?;
        let source = opt_str(rec, "source", loc)?.unwrap_or_else(|| "paragraph_jsonl".into());
        let record_flags = str_list(rec, "flags", loc)?;
        let paragraph = self.paragraph(rec, &para_id, &record_flags, loc)?;

        let doc = self.document_mut(&doc_id, title, source);
        match doc.sections.iter_mut().find(|s| s.section_id == section_id) {
            Some(section) => section.paragraphs.push(paragraph),
            None => doc.sections.push(Section {
                section_id,
                heading,
                paragraphs: vec![paragraph],
                gold_gaps: Vec::new(),
            }),
        }
        Ok(())
    }

    fn section_record(&mut self, rec: &Map<String, Value>, loc: &Loc) -> Result<(), CorpusError> {
        check_version(rec, loc)?;
        let doc_id = req_str(rec, "doc_id", loc)?;
        let section_id = req_str(rec, "section_id", loc)?;
        let heading = opt_str(rec, "heading", loc)?;
        let title = opt_str(rec, "title", loc)?;
        let source = opt_str(rec, "source", loc)?.unwrap_or_else(|| "section_jsonl".into());
        let record_flags = str_list(rec, "flags", loc)?;

        let raw_paragraphs = match rec.get("paragraphs") {
            Some(Value::Array(items)) if !items.is_empty() => items,
            Some(Value::Array(_)) => {
                return Err(CorpusError::malformed(
                    loc,
                    "paragraphs",
                    "must not be empty",
                ))
            }
            Some(_) => {
                return Err(CorpusError::malformed(
                    loc,
                    "paragraphs",
                    "expected an array",
                ))
            }
            None => return Err(CorpusError::malformed(loc, "paragraphs", "missing field")),
        };
        let mut paragraphs = Vec::with_capacity(raw_paragraphs.len());
        for (i, item) in raw_paragraphs.iter().enumerate() {
            let default_id = format!("{doc_id}/{section_id}/p{i}");
            let paragraph = match item {
                Value::String(text) => {
                    let mut m = Map::new();
                    m.insert("text".into(), Value::String(text.clone()));
                    self.paragraph(&m, &default_id, &record_flags, loc)?
                }
                Value::Object(m) => {
                    let id = opt_str(m, "para_id", loc)?.unwrap_or(default_id);
                    self.paragraph(m, &id, &record_flags, loc)?
                }
                _ => {
                    return Err(CorpusError::malformed(
                        loc,
                        &format!("paragraphs[{i}]"),
                        "expected a string or object",
                    ))
                }
            };
            paragraphs.push(paragraph);
        }
        let gold_gaps = self.gaps(
            rec,
            "gold_gaps",
            &section_id,
            GapKind::Explicit,
            &record_flags,
            loc,
        )?;

        let doc = self.document_mut(&doc_id, title, source);
        if doc.sections.iter().any(|s| s.section_id == section_id) {
            return Err(CorpusError::Duplicate {
                kind: "section_id",
                id: format!("{doc_id}/{section_id}"),
                location: loc.as_str().to_string(),
            });
        }
        doc.sections.push(Section {
            section_id,
            heading,
            paragraphs,
            gold_gaps,
        });
        Ok(())
    }

    fn fulltext(&mut self, file: &Path, body: &str) -> Result<(), CorpusError> {
        let loc = Loc::file(file);
        let doc_id = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if self.doc_index.contains_key(&doc_id) {
            return Err(CorpusError::Duplicate {
                kind: "doc_id",
                id: doc_id,
                location: loc.as_str().to_string(),
            });
        }
        let mut raw_sections: Vec<(Option<String>, Vec<String>)> = vec![(None, Vec::new())];
        for line in body.lines() {
            let trimmed = line.trim();
            if let Some(heading) = section_heading(trimmed) {
                raw_sections.push((Some(heading), Vec::new()));
            } else {
                raw_sections
                    .last_mut()
                    .expect("non-empty")
                    .1
                    .push(line.to_string());
            }
        }

        let mut sections = Vec::new();
        for (heading, lines) in raw_sections {
            let section_id = format!("{doc_id}/sec{}", sections.len());
            let mut paragraphs = Vec::new();
            for block in lines
                .join("\n")
                .split("\n\n")
                .map(str::trim)
                .filter(|b| !b.is_empty())
            {
                let para_id = format!("{section_id}/p{}", paragraphs.len());
                let sentences = self.sentences_from_text(block, &para_id);
                self.claim_para_id(&para_id, &loc)?;
                paragraphs.push(Paragraph {
                    para_id,
                    sentences,
                    gold_gaps: Vec::new(),
                    masked_conclusions: Vec::new(),
                });
            }
            if !paragraphs.is_empty() {
                sections.push(Section {
                    section_id,
                    heading,
                    paragraphs,
                    gold_gaps: Vec::new(),
                });
            }
        }
        if sections.is_empty() {
            return Err(CorpusError::malformed(
                &loc,
                "body",
                "document contains no text",
            ));
        }
        self.doc_index.insert(doc_id.clone(), self.documents.len());
        self.documents.push(Document {
            doc_id,
            title: None,
            sections,
            source_tag: "fulltext_dir".into(),
        });
        Ok(())
    }

    fn claim_para_id(&mut self, id: &str, loc: &Loc) -> Result<(), CorpusError> {
        if !self.para_ids.insert(id.to_string()) {
            return Err(CorpusError::Duplicate {
                kind: "para_id",
                id: id.to_string(),
                location: loc.as_str().to_string(),
            });
        }
        Ok(())
    }

    fn sentences_from_text(&self, text: &str, para_id: &str) -> Vec<Sentence> {
        self.splitter
            .split(text)
            .into_iter()
            .enumerate()
            .map(|(i, s)| Sentence::new(format!("{para_id}.s{i}"), s))
            .collect()
    }

    fn paragraph(
        &mut self,
        rec: &Map<String, Value>,
        para_id: &str,
        inherited_flags: &[String],
        loc: &Loc,
    ) -> Result<Paragraph, CorpusError> {
        if para_id.trim().is_empty() {
            return Err(CorpusError::malformed(loc, "para_id", "must not be empty"));
        }
        self.claim_para_id(para_id, loc)?;
        let mut flags = inherited_flags.to_vec();
        for f in str_list(rec, "flags", loc)? {
            if !flags.contains(&f) {
                flags.push(f);
            }
        }

        let sentences = match (rec.get("sentences"), rec.get("text")) {
            (Some(Value::Array(items)), _) => {
                let mut out = Vec::with_capacity(items.len());
                let mut seen = HashSet::new();
                for (i, item) in items.iter().enumerate() {
                    let field = format!("sentences[{i}]");
                    let (id, text) = match item {
                        Value::String(t) => (format!("{para_id}.s{i}"), t.clone()),
                        Value::Object(m) => (
                            opt_str(m, "sent_id", loc)?
                                .unwrap_or_else(|| format!("{para_id}.s{i}")),
                            req_str(m, "text", loc)
                                .map_err(|_| CorpusError::malformed(loc, &field, "missing text"))?,
                        ),
                        _ => {
                            return Err(CorpusError::malformed(
                                loc,
                                &field,
                                "expected a string or object",
                            ))
                        }
                    };
                    let text = crate::text::normalize_whitespace(&text);
                    if text.is_empty() {
                        return Err(CorpusError::malformed(loc, &field, "empty sentence"));
                    }
                    if !seen.insert(id.clone()) {
                        return Err(CorpusError::Duplicate {
                            kind: "sent_id",
                            id,
                            location: loc.as_str().to_string(),
                        });
                    }
                    out.push(Sentence::new(id, text));
                }
                out
            }
            (Some(_), _) => {
                return Err(CorpusError::malformed(
                    loc,
                    "sentences",
                    "expected an array",
                ))
            }
            (None, Some(Value::String(text))) => self.sentences_from_text(text, para_id),
            (None, Some(_)) => {
                return Err(CorpusError::malformed(loc, "text", "expected a string"))
            }
            (None, None) => {
                return Err(CorpusError::malformed(
                    loc,
                    "text",
                    "record needs `text` or `sentences`",
                ))
            }
        };
        if sentences.is_empty() {
            return Err(CorpusError::malformed(
                loc,
                "text",
                "paragraph has no sentences",
            ));
        }

        let gold_gaps = self.gaps(rec, "gold_gaps", para_id, GapKind::Explicit, &flags, loc)?;
        let masked_conclusions = self.gaps(
            rec,
            "masked_conclusions",
            para_id,
            GapKind::Implicit,
            &flags,
            loc,
        )?;
        if let Some(bad) = masked_conclusions
            .iter()
            .find(|g| g.kind != GapKind::Implicit)
        {
            return Err(CorpusError::malformed(
                loc,
                "masked_conclusions",
                &format!("conclusion `{}` must have kind implicit", bad.gap_id),
            ));
        }
        Ok(Paragraph {
            para_id: para_id.to_string(),
            sentences,
            gold_gaps,
            masked_conclusions,
        })
    }

    fn gaps(
        &mut self,
        rec: &Map<String, Value>,
        field: &str,
        unit_ref: &str,
        default_kind: GapKind,
        inherited_flags: &[String],
        loc: &Loc,
    ) -> Result<Vec<GoldGap>, CorpusError> {
        let items = match rec.get(field) {
            None | Some(Value::Null) => return Ok(Vec::new()),
            Some(Value::Array(items)) => items,
            Some(_) => return Err(CorpusError::malformed(loc, field, "expected an array")),
        };
        let prefix = if default_kind == GapKind::Implicit {
            "m"
        } else {
            "g"
        };
        let mut out = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            let item_field = format!("{field}[{i}]");
            let default_id = format!("{unit_ref}.{prefix}{i}");
            let mut gap = match item {
                Value::String(text) => GoldGap {
                    gap_id: default_id,
                    text: text.trim().to_string(),
                    kind: default_kind,
                    category: None,
                    unit_ref: unit_ref.to_string(),
                    flags: Vec::new(),
                },
                Value::Object(m) => {
                    let kind = match opt_str(m, "kind", loc)?.as_deref() {
                        None => default_kind,
                        Some("explicit") => GapKind::Explicit,
                        Some("implicit") => GapKind::Implicit,
                        Some(other) => {
                            return Err(CorpusError::malformed(
                                loc,
                                &format!("{item_field}.kind"),
                                &format!("unknown kind `{other}`"),
                            ))
                        }
                    };
                    let category = match opt_str(m, "category", loc)? {
                        None => None,
                        Some(c) => Some(c.parse::<GapCategory>().map_err(|e| {
                            CorpusError::malformed(loc, &format!("{item_field}.category"), &e)
                        })?),
                    };
                    GoldGap {
                        gap_id: opt_str(m, "gap_id", loc)?.unwrap_or(default_id),
                        text: req_str(m, "text", loc)
                            .map_err(|_| {
                                CorpusError::malformed(
                                    loc,
                                    &format!("{item_field}.text"),
                                    "missing text",
                                )
                            })?
                            .trim()
                            .to_string(),
                        kind,
                        category,
                        unit_ref: opt_str(m, "unit_ref", loc)?
                            .unwrap_or_else(|| unit_ref.to_string()),
                        flags: str_list(m, "flags", loc)?,
                    }
                }
                _ => {
                    return Err(CorpusError::malformed(
                        loc,
                        &item_field,
                        "expected a string or object",
                    ))
                }
            };
            if gap.text.is_empty() {
                return Err(CorpusError::malformed(
                    loc,
                    &format!("{item_field}.text"),
                    "must not be empty",
                ));
            }
            for f in inherited_flags {
                if !gap.flags.contains(f) {
                    gap.flags.push(f.clone());
                }
            }
            if !self.gap_ids.insert(gap.gap_id.clone()) {
                return Err(CorpusError::Duplicate {
                    kind: "gap_id",
                    id: gap.gap_id,
                    location: loc.as_str().to_string(),
                });
            }
            out.push(gap);
        }
        Ok(out)
    }
}

fn section_heading(line: &str) -> Option<String> {
    let rest = line.strip_prefix(SECTION_MARKER_PREFIX)?;
    let heading = rest.strip_suffix("---")?;
    Some(heading.trim().to_string())
}

fn check_version(rec: &Map<String, Value>, loc: &Loc) -> Result<(), CorpusError> {
    match rec.get("schema_version") {
        None => Ok(()),
        Some(v) => match v.as_u64() {
            Some(n) if (1..=SCHEMA_VERSION).contains(&n) => Ok(()),
            _ => Err(CorpusError::malformed(
                loc,
                "schema_version",
                &format!("unsupported schema version {v}"),
            )),
        },
    }
}

fn req_str(rec: &Map<String, Value>, field: &str, loc: &Loc) -> Result<String, CorpusError> {
    match rec.get(field) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
        Some(Value::String(_)) => Err(CorpusError::malformed(loc, field, "must not be empty")),
        Some(_) => Err(CorpusError::malformed(loc, field, "expected a string")),
        None => Err(CorpusError::malformed(loc, field, "missing field")),
    }
}

fn opt_str(
    rec: &Map<String, Value>,
    field: &str,
    loc: &Loc,
) -> Result<Option<String>, CorpusError> {
    match rec.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(CorpusError::malformed(loc, field, "expected a string")),
    }
}

fn str_list(rec: &Map<String, Value>, field: &str, loc: &Loc) -> Result<Vec<String>, CorpusError> {
    match rec.get(field) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str().map(str::to_string).ok_or_else(|| {
                    CorpusError::malformed(loc, field, "expected an array of strings")
                })
            })
            .collect(),
        Some(_) => Err(CorpusError::malformed(
            loc,
            field,
            "expected an array of strings",
        )),
    }
}
