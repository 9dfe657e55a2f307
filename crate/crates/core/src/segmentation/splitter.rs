//! Rule-based sentence splitting.
//!
//! The splitter works on whitespace tokens, so joining its output with single
//! spaces always reproduces the whitespace-normalized input. A token ending in
//! terminal punctuation closes a sentence unless it is a known abbreviation or
//! the next token starts in lowercase.

use std::collections::HashSet;

/// Anything that can cut text into sentences.
///
/// Implementations must return non-empty sentences whose single-space join
/// equals the whitespace-normalized input.
pub trait SentenceSplitter: Send + Sync {
    fn split(&self, text: &str) -> Vec<String>;
}

const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "al.", "approx.", "ca.", "cf.", "chap.", "co.", "corp.", "dept.", "dr.", "e.g.", "eq.", "eqs.",
    "esp.", "et.", "etc.", "ex.", "fig.", "figs.", "i.e.", "inc.", "jr.", "ltd.", "max.", "min.",
    "mr.", "mrs.", "ms.", "no.", "nos.", "p.", "pp.", "prof.", "ref.", "refs.", "resp.", "sd.",
    "sec.", "sect.", "sp.", "spp.", "sr.", "st.", "subsp.", "suppl.", "tab.", "var.", "viz.",
    "vol.", "vs.", "wt.",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '\u{201d}', '\u{2019}'];

/// Default splitter: terminal punctuation, a biomedical abbreviation
/// stop-list and a decimal guard.
#[derive(Debug, Clone)]
pub struct RuleSplitter {
    abbreviations: HashSet<String>,
}

impl Default for RuleSplitter {
    fn default() -> Self {
        Self {
            abbreviations: DEFAULT_ABBREVIATIONS
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl RuleSplitter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds extra abbreviations (case-insensitive, trailing period included).
    pub fn with_abbreviations<I, S>(mut self, extra: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.abbreviations
            .extend(extra.into_iter().map(|s| s.as_ref().to_lowercase()));
        self
    }

    fn is_abbreviation(&self, token: &str) -> bool {
        let bare = token.trim_start_matches(['(', '[', '"', '\'', '\u{201c}']);
        let lower = bare.to_lowercase();
        if self.abbreviations.contains(&lower) {
            return true;
        }
        // dotted forms such as "U.S."; single initials ("gene X.") are
        // too often real sentence ends in scientific prose
        let letters: Vec<char> = bare.chars().collect();
        letters.len() >= 4
            && letters
                .chunks(2)
                .all(|pair| pair.len() == 2 && pair[0].is_alphabetic() && pair[1] == '.')
    }

    fn ends_sentence(&self, token: &str, next: Option<&str>) -> bool {
        let core = token.trim_end_matches(CLOSERS);
        let Some(last) = core.chars().last() else {
            return false;
        };
        if !matches!(last, '.' | '!' | '?' | '\u{2026}') {
            return false;
        }
        if last == '.' && self.is_abbreviation(core) {
            return false;
        }
        match next {
            None => true,
            Some(n) => {
                let first = n
                    .trim_start_matches(['(', '[', '"', '\'', '\u{201c}', '\u{2018}'])
                    .chars()
                    .next();
                match first {
                    Some(c) if c.is_lowercase() => false,
                    // "3." followed by a digit reads as a broken decimal
                    Some(c) if c.is_ascii_digit() => {
                        !(last == '.'
                            && core[..core.len() - 1].ends_with(|p: char| p.is_ascii_digit()))
                    }
                    _ => true,
                }
            }
        }
    }
}

impl SentenceSplitter for RuleSplitter {
    fn split(&self, text: &str) -> Vec<String> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let mut sentences = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        for (i, tok) in tokens.iter().enumerate() {
            current.push(tok);
            if self.ends_sentence(tok, tokens.get(i + 1).copied()) {
                sentences.push(current.join(" "));
                current.clear();
            }
        }
        if !current.is_empty() {
            sentences.push(current.join(" "));
        }
        sentences
    }
}
