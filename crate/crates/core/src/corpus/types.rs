use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::text;

/// Whether a gap is stated outright or must be inferred from context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapKind {
    Explicit,
    Implicit,
}

/// The five knowledge-gap categories, in their fixed tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapCategory {
    ResearchAim,
    LevelsOfEvidence,
    AnomalyCuriousFinding,
    Barrier,
    FutureOpportunity,
}

impl GapCategory {
    pub const ALL: [GapCategory; 5] = [
        GapCategory::ResearchAim,
        GapCategory::LevelsOfEvidence,
        GapCategory::AnomalyCuriousFinding,
        GapCategory::Barrier,
        GapCategory::FutureOpportunity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GapCategory::ResearchAim => "research_aim",
            GapCategory::LevelsOfEvidence => "levels_of_evidence",
            GapCategory::AnomalyCuriousFinding => "anomaly_curious_finding",
            GapCategory::Barrier => "barrier",
            GapCategory::FutureOpportunity => "future_opportunity",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for GapCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GapCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GapCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| format!("unknown gap category `{s}`"))
    }
}

/// An annotated gap statement attached to a paragraph or section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldGap {
    pub gap_id: String,
    pub text: String,
    pub kind: GapKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<GapCategory>,
    pub unit_ref: String,
    /// Curation flags, e.g. `general_knowledge`; consumed by [`super::FilterPolicy`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub sent_id: String,
    pub text: String,
    pub word_count: usize,
}

impl Sentence {
    pub fn new(sent_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            sent_id: sent_id.into(),
            word_count: text::word_count(&text),
            text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paragraph {
    pub para_id: String,
    pub sentences: Vec<Sentence>,
    #[serde(default)]
    pub gold_gaps: Vec<GoldGap>,
    #[serde(default)]
    pub masked_conclusions: Vec<GoldGap>,
}

impl Paragraph {
    /// Sentence texts joined by single spaces.
    pub fn text(&self) -> String {
        join_sentences(&self.sentences)
    }

    pub fn word_count(&self) -> usize {
        self.sentences.iter().map(|s| s.word_count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub section_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<String>,
    pub paragraphs: Vec<Paragraph>,
    /// Golds annotated at section granularity (section-level corpora).
    #[serde(default)]
    pub gold_gaps: Vec<GoldGap>,
}

impl Section {
    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.paragraphs.iter().flat_map(|p| p.sentences.iter())
    }

    pub fn text(&self) -> String {
        self.paragraphs
            .iter()
            .map(Paragraph::text)
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Section-level golds followed by every paragraph's golds.
    pub fn all_gold_gaps(&self) -> impl Iterator<Item = &GoldGap> {
        self.gold_gaps
            .iter()
            .chain(self.paragraphs.iter().flat_map(|p| p.gold_gaps.iter()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub sections: Vec<Section>,
    #[serde(default)]
    pub source_tag: String,
}

impl Document {
    pub fn text(&self) -> String {
        let mut out = String::new();
        if let Some(title) = &self.title {
            out.push_str(title);
            out.push_str("\n\n");
        }
        for (i, s) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            if let Some(h) = &s.heading {
                out.push_str(h);
                out.push_str("\n\n");
            }
            out.push_str(&s.text());
        }
        out
    }

    pub fn paragraphs(&self) -> impl Iterator<Item = &Paragraph> {
        self.sections.iter().flat_map(|s| s.paragraphs.iter())
    }
}

/// Immutable, validated collection of documents.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn paragraphs(&self) -> impl Iterator<Item = &Paragraph> {
        self.documents.iter().flat_map(Document::paragraphs)
    }

    pub fn sections(&self) -> impl Iterator<Item = (&Document, &Section)> {
        self.documents
            .iter()
            .flat_map(|d| d.sections.iter().map(move |s| (d, s)))
    }

    pub fn gold_count(&self) -> usize {
        self.sections()
            .map(|(_, s)| s.all_gold_gaps().count())
            .sum()
    }

    pub fn paragraph_count(&self) -> usize {
        self.paragraphs().count()
    }
}

pub(crate) fn join_sentences(sentences: &[Sentence]) -> String {
    sentences
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}
