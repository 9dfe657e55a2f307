//! Turns a corpus into prompt units for a task and context mode.
//!
//! A *natural* unit is what gold statements attach to and what reports
//! count: a paragraph or section for explicit extraction, a masked paragraph
//! for paragraph-level inference, a document for full-text inference. In
//! chunked mode a natural unit may be sent as several prompt units whose
//! outputs are pooled back together.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ContextMode, Task};
use super::OrchestratorError;
use crate::corpus::{mask_conclusions, Corpus, CorpusFormat, FilterPolicy, GoldGap, Sentence};
use crate::segmentation::{chunk_word_counts, Chunk};
use crate::text::word_count;
use crate::util::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalUnit {
    pub natural_ref: String,
    pub doc_ref: String,
    /// Full text; the premise for masked paragraphs.
    pub text: String,
    pub golds: Vec<GoldGap>,
}

/// One prompt's worth of context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub unit_id: String,
    pub natural_ref: String,
    pub doc_ref: String,
    pub ordinal: usize,
    pub word_count: usize,
    #[serde(skip)]
    pub context: String,
}

#[derive(Debug, Clone, Default)]
pub struct UnitPlan {
    pub naturals: Vec<NaturalUnit>,
    pub units: Vec<Unit>,
    pub chunks: Vec<Chunk>,
}

#[derive(Debug, Clone, Copy)]
pub struct PlanOptions {
    pub task: Task,
    pub format: CorpusFormat,
    pub mode: ContextMode,
    pub budget: usize,
    pub sample: Option<usize>,
    pub seed: u64,
}

/// Digest of the canonical corpus serialization.
pub fn corpus_digest(corpus: &Corpus) -> String {
    format!("sha256:{}", sha256_hex(crate::corpus::write_corpus(corpus)))
}

struct Source<'a> {
    natural: NaturalUnit,
    /// Sentence groups chunked independently (sections of a document).
    groups: Vec<(String, Vec<&'a Sentence>)>,
    whole: String,
}

pub fn plan_units(
    corpus: &Corpus,
    opts: &PlanOptions,
    filter: &FilterPolicy,
) -> Result<UnitPlan, OrchestratorError> {
    let mut sources: Vec<Source<'_>> = Vec::new();
    let keep = |g: &&GoldGap| filter.keeps(g);
    match opts.task {
        Task::Explicit if opts.format == CorpusFormat::ParagraphJsonl => {
            for (doc, section) in corpus.sections() {
                for p in &section.paragraphs {
                    let text = p.text();
                    sources.push(Source {
                        natural: NaturalUnit {
                            natural_ref: p.para_id.clone(),
                            doc_ref: doc.doc_id.clone(),
                            text: text.clone(),
                            golds: p.gold_gaps.iter().filter(keep).cloned().collect(),
                        },
                        groups: vec![(p.para_id.clone(), p.sentences.iter().collect())],
                        whole: text,
                    });
                }
            }
        }
        Task::Explicit => {
            for (doc, section) in corpus.sections() {
                let natural_ref = format!("{}/{}", doc.doc_id, section.section_id);
                let text = section.text();
                sources.push(Source {
                    natural: NaturalUnit {
                        natural_ref: natural_ref.clone(),
                        doc_ref: doc.doc_id.clone(),
                        text: text.clone(),
                        golds: section.all_gold_gaps().filter(keep).cloned().collect(),
                    },
                    groups: vec![(natural_ref, section.sentences().collect())],
                    whole: text,
                });
            }
        }
        Task::ImplicitParagraph => {
            for (doc, section) in corpus.sections() {
                for p in section
                    .paragraphs
                    .iter()
                    .filter(|p| !p.masked_conclusions.is_empty())
                {
                    let masked =
                        mask_conclusions(p).map_err(|e| OrchestratorError::Data(e.to_string()))?;
                    let premise = masked.premise_text();
                    let sentences: Vec<&Sentence> = p.sentences[..masked.premise_sentences.len()]
                        .iter()
                        .collect();
                    sources.push(Source {
                        natural: NaturalUnit {
                            natural_ref: p.para_id.clone(),
                            doc_ref: doc.doc_id.clone(),
                            text: premise.clone(),
                            golds: masked.gold_conclusions,
                        },
                        groups: vec![(p.para_id.clone(), sentences)],
                        whole: premise,
                    });
                }
            }
            if sources.is_empty() {
                return Err(OrchestratorError::Data(
                    "no paragraph carries masked conclusions; nothing to infer".into(),
                ));
            }
        }
        Task::ImplicitFulltext => {
            for doc in &corpus.documents {
                let text = doc.text();
                sources.push(Source {
                    natural: NaturalUnit {
                        natural_ref: doc.doc_id.clone(),
                        doc_ref: doc.doc_id.clone(),
                        text: text.clone(),
                        golds: doc
                            .sections
                            .iter()
                            .flat_map(|s| s.all_gold_gaps())
                            .filter(keep)
                            .cloned()
                            .collect(),
                    },
                    groups: doc
                        .sections
                        .iter()
                        .map(|s| {
                            (
                                format!("{}/{}", doc.doc_id, s.section_id),
                                s.sentences().collect(),
                            )
                        })
                        .collect(),
                    whole: text,
                });
            }
        }
    }
    if sources.is_empty() {
        return Err(OrchestratorError::Data("corpus yields no units".into()));
    }

    if let Some(n) = opts.sample {
        if n < sources.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut picked: Vec<usize> =
                rand::seq::index::sample(&mut rng, sources.len(), n).into_vec();
            picked.sort_unstable();
            let keep: HashSet<usize> = picked.into_iter().collect();
            sources = sources
                .into_iter()
                .enumerate()
                .filter(|(i, _)| keep.contains(i))
                .map(|(_, s)| s)
                .collect();
        }
    }

    let mut plan = UnitPlan::default();
    for src in sources {
        let n = &src.natural;
        match opts.mode {
            ContextMode::NoLimit => plan.units.push(Unit {
                unit_id: n.natural_ref.clone(),
                natural_ref: n.natural_ref.clone(),
                doc_ref: n.doc_ref.clone(),
                ordinal: 0,
                word_count: word_count(&src.whole),
                context: src.whole.clone(),
            }),
            ContextMode::Chunked => {
                for (parent, sentences) in &src.groups {
                    let counts: Vec<usize> = sentences.iter().map(|s| s.word_count).collect();
                    for chunk in chunk_word_counts(parent, &counts, opts.budget) {
                        plan.units.push(Unit {
                            unit_id: chunk.chunk_id.clone(),
                            natural_ref: n.natural_ref.clone(),
                            doc_ref: n.doc_ref.clone(),
                            ordinal: plan
                                .units
                                .iter()
                                .filter(|u| u.natural_ref == n.natural_ref)
                                .count(),
                            word_count: chunk.word_count,
                            context: chunk.text(sentences),
                        });
                        plan.chunks.push(chunk);
                    }
                }
            }
        }
        plan.naturals.push(src.natural);
    }
    Ok(plan)
}

/// Lines of `units.jsonl`.
pub fn units_jsonl(units: &[Unit]) -> String {
    units
        .iter()
        .map(|u| serde_json::to_string(u).expect("unit serializes") + "\n")
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_jsonl;

    fn long_paragraph(id: &str, sentences: usize, words: usize) -> String {
        let s: Vec<String> = (0..sentences)
            .map(|i| {
                let body: Vec<String> = (0..words - 1).map(|w| format!("w{i}x{w}")).collect();
                format!("Start {}.", body.join(" "))
            })
            .collect();
        serde_json::json!({"para_id": id, "doc_id": "d1", "section_id": "s1", "text": s.join(" ")})
            .to_string()
    }

    fn opts(task: Task, format: CorpusFormat, mode: ContextMode, budget: usize) -> PlanOptions {
        PlanOptions {
            task,
            format,
            mode,
            budget,
            sample: None,
            seed: 0,
        }
    }

    #[test]
    fn chunked_section_of_2600_words_gives_three_units() {
        // 26 sentences of 100 words under a 1000-word budget
        let corpus =
            parse_jsonl(&long_paragraph("p1", 26, 100), CorpusFormat::ParagraphJsonl).unwrap();
        let o = opts(
            Task::Explicit,
            CorpusFormat::ParagraphJsonl,
            ContextMode::Chunked,
            1000,
        );
        let plan = plan_units(&corpus, &o, &FilterPolicy::none()).unwrap();
        assert_eq!(plan.naturals.len(), 1);
        assert_eq!(plan.units.len(), 3);
        let words: Vec<usize> = plan.units.iter().map(|u| u.word_count).collect();
        assert_eq!(words, vec![1000, 1000, 600]);
        assert!(plan.units.iter().all(|u| u.natural_ref == "p1"));
        assert_eq!(plan.units[2].unit_id, "p1#c2");
        assert_eq!(plan.units[2].ordinal, 2);
    }

    #[test]
    fn no_limit_is_one_unit_per_natural() {
        let text = [long_paragraph("p1", 3, 10), long_paragraph("p2", 2, 10)].join("\n");
        let corpus = parse_jsonl(&text, CorpusFormat::ParagraphJsonl).unwrap();
        let o = opts(
            Task::Explicit,
            CorpusFormat::ParagraphJsonl,
            ContextMode::NoLimit,
            1000,
        );
        let plan = plan_units(&corpus, &o, &FilterPolicy::none()).unwrap();
        let ids: Vec<&str> = plan.units.iter().map(|u| u.unit_id.as_str()).collect();
        assert_eq!(ids, ["p1", "p2"]);
        assert_eq!(plan.units[0].word_count, 30);
        assert!(plan.chunks.is_empty());
    }

    #[test]
    fn masked_paragraphs_only() {
        let lines = [
            r#"{"para_id":"a","text":"Premise one. Premise two. We should test X.","masked_conclusions":[{"gap_id":"g1","text":"We should test X."}]}"#,
            r#"{"para_id":"b","text":"Nothing masked here."}"#,
        ]
        .join("\n");
        let corpus = parse_jsonl(&lines, CorpusFormat::ParagraphJsonl).unwrap();
        let o = opts(
            Task::ImplicitParagraph,
            CorpusFormat::ParagraphJsonl,
            ContextMode::NoLimit,
            1000,
        );
        let plan = plan_units(&corpus, &o, &FilterPolicy::standard()).unwrap();
        assert_eq!(plan.naturals.len(), 1);
        assert_eq!(plan.units[0].context, "Premise one. Premise two.");
        assert_eq!(plan.naturals[0].golds[0].gap_id, "g1");
    }

    #[test]
    fn sampling_is_seeded() {
        let text: Vec<String> = (0..10)
            .map(|i| long_paragraph(&format!("p{i}"), 1, 5))
            .collect();
        let corpus = parse_jsonl(&text.join("\n"), CorpusFormat::ParagraphJsonl).unwrap();
        let mut o = opts(
            Task::Explicit,
            CorpusFormat::ParagraphJsonl,
            ContextMode::NoLimit,
            1000,
        );
        o.sample = Some(4);
        o.seed = 7;
        let a = plan_units(&corpus, &o, &FilterPolicy::none()).unwrap();
        let b = plan_units(&corpus, &o, &FilterPolicy::none()).unwrap();
        assert_eq!(a.units, b.units);
        assert_eq!(a.units.len(), 4);
        let ids: Vec<&String> = a.units.iter().map(|u| &u.unit_id).collect();
        let mut sorted = ids.clone();
        sorted.sort_by_key(|s| s[1..].parse::<usize>().unwrap());
        assert_eq!(ids, sorted);
    }
}
