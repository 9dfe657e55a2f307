//! Sentence segmentation and sentence-aligned chunking under a word budget.

mod splitter;

pub use splitter::{RuleSplitter, SentenceSplitter};

use serde::{Deserialize, Serialize};

use crate::corpus::{Section, Sentence};

/// Default chunk budget, in words.
pub const DEFAULT_CHUNK_BUDGET: usize = 1000;

/// A run of consecutive sentences of one parent unit.
///
/// `start` and `end` are inclusive indices into the parent's sentence
/// sequence. Only a single-sentence chunk may exceed the budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub parent_id: String,
    pub ordinal: usize,
    pub start: usize,
    pub end: usize,
    pub word_count: usize,
}

impl Chunk {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_oversize(&self, budget: usize) -> bool {
        self.word_count > budget
    }

    /// Text of the chunk given the parent's sentences.
    pub fn text(&self, sentences: &[&Sentence]) -> String {
        sentences[self.start..=self.end]
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Splits `text` into sentences with the default rule-based splitter.
pub fn split_sentences(text: &str) -> Vec<String> {
    RuleSplitter::default().split(text)
}

/// Chunks a section's sentences (flattened across paragraphs).
pub fn chunk_section(section: &Section, budget: usize) -> Vec<Chunk> {
    let counts: Vec<usize> = section.sentences().map(|s| s.word_count).collect();
    chunk_word_counts(&section.section_id, &counts, budget)
}

/// Greedy next-fit packing: a sentence joins the open chunk iff the chunk
/// stays within `budget`, otherwise it opens the next chunk. A sentence longer
/// than the budget becomes its own chunk.
///
/// # Panics
///
/// Panics if `budget` is zero.
pub fn chunk_word_counts(parent_id: &str, word_counts: &[usize], budget: usize) -> Vec<Chunk> {
    assert!(budget >= 1, "chunk budget must be at least one word");
    let mut chunks = Vec::new();
    let mut start = 0;
    let mut words = 0;
    for (i, &wc) in word_counts.iter().enumerate() {
        if i > start && words + wc > budget {
            chunks.push(make_chunk(parent_id, chunks.len(), start, i - 1, words));
            start = i;
            words = 0;
        }
        words += wc;
    }
    if !word_counts.is_empty() {
        chunks.push(make_chunk(
            parent_id,
            chunks.len(),
            start,
            word_counts.len() - 1,
            words,
        ));
    }
    chunks
}

fn make_chunk(
    parent_id: &str,
    ordinal: usize,
    start: usize,
    end: usize,
    word_count: usize,
) -> Chunk {
    Chunk {
        chunk_id: format!("{parent_id}#c{ordinal}"),
        parent_id: parent_id.to_string(),
        ordinal,
        start,
        end,
        word_count,
    }
}

/// Serializes chunks as a JSON-lines manifest.
pub fn chunk_manifest(chunks: &[Chunk]) -> String {
    let mut out = String::new();
    for c in chunks {
        out.push_str(&serde_json::to_string(c).expect("chunk serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Paragraph;
    use proptest::prelude::*;

    fn spans(chunks: &[Chunk]) -> Vec<(usize, usize, usize)> {
        chunks
            .iter()
            .map(|c| (c.start, c.end, c.word_count))
            .collect()
    }

    #[test]
    fn under_budget_single_chunk() {
        let section = Section {
            section_id: "s1".into(),
            heading: None,
            paragraphs: vec![Paragraph {
                para_id: "p1".into(),
                sentences: vec![Sentence::new(
                    "p1.0",
                    "one two three four five six seven eight nine ten.",
                )],
                gold_gaps: vec![],
                masked_conclusions: vec![],
            }],
            gold_gaps: vec![],
        };
        let chunks = chunk_section(&section, DEFAULT_CHUNK_BUDGET);
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].word_count, 10);
        assert_eq!(chunks[0].chunk_id, "s1#c0");
    }

    #[test]
    fn greedy_packing_defers_overflowing_sentence() {
        let chunks = chunk_word_counts("s", &[600, 500, 900, 100], 1000);
        assert_eq!(spans(&chunks), vec![(0, 0, 600), (1, 1, 500), (2, 3, 1000)]);
    }

    #[test]
    fn oversize_sentence_gets_its_own_chunk() {
        let chunks = chunk_word_counts("s", &[1200], 1000);
        assert_eq!(spans(&chunks), vec![(0, 0, 1200)]);
        let chunks = chunk_word_counts("s", &[10, 1200, 10], 1000);
        assert_eq!(spans(&chunks), vec![(0, 0, 10), (1, 1, 1200), (2, 2, 10)]);
    }

    #[test]
    fn empty_section_has_no_chunks() {
        assert!(chunk_word_counts("s", &[], 5).is_empty());
    }

    #[test]
    fn manifest_fields() {
        let m = chunk_manifest(&chunk_word_counts("s", &[3], 5));
        assert_eq!(
            m,
            "{\"chunk_id\":\"s#c0\",\"parent_id\":\"s\",\"ordinal\":0,\"start\":0,\"end\":0,\"word_count\":3}\n"
        );
    }

    proptest! {
        #[test]
        fn partition_budget_monotonicity(
            counts in proptest::collection::vec(0usize..400, 0..40),
            budget in 1usize..600,
            extra in 0usize..300,
        ) {
            let chunks = chunk_word_counts("s", &counts, budget);
            let mut next = 0;
            for (k, c) in chunks.iter().enumerate() {
                prop_assert_eq!(c.ordinal, k);
                prop_assert_eq!(c.start, next);
                prop_assert!(c.end >= c.start);
                next = c.end + 1;
                prop_assert_eq!(c.word_count, counts[c.start..=c.end].iter().sum::<usize>());
                if c.len() >= 2 {
                    prop_assert!(c.word_count <= budget);
                }
            }
            prop_assert_eq!(next, counts.len());
            let bigger = chunk_word_counts("s", &counts, budget + extra);
            prop_assert!(bigger.len() <= chunks.len());
            prop_assert_eq!(chunk_word_counts("s", &counts, budget), chunks);
        }
    }
}
