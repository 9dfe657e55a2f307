//! ROUGE-L F1 over normalized tokens.

use crate::text::Normalizer;

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { above.max(row[j]) };
            diag = above;
        }
    }
    row[b.len()]
}

/// F1 from an LCS length and the two sequence lengths; 0 when either is empty.
pub fn f1_from_lcs(lcs: usize, cand_len: usize, ref_len: usize) -> f64 {
    if cand_len == 0 || ref_len == 0 || lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / cand_len as f64;
    let r = lcs as f64 / ref_len as f64;
    2.0 * p * r / (p + r)
}

/// ROUGE-L F1 over pre-tokenized input.
pub fn rouge_l_tokens<T: PartialEq>(candidate: &[T], reference: &[T]) -> f64 {
    f1_from_lcs(
        lcs_len(candidate, reference),
        candidate.len(),
        reference.len(),
    )
}

/// One-off ROUGE-L F1. Prefer [`RougeScorer`] in loops.
pub fn rouge_l_f1(candidate: &str, reference: &str, use_stemming: bool) -> f64 {
    RougeScorer::new(use_stemming).score(candidate, reference)
}

#[derive(Debug, Clone)]
pub struct RougeScorer {
    normalizer: Normalizer,
}

impl RougeScorer {
    pub fn new(use_stemming: bool) -> Self {
        Self::with_normalizer(if use_stemming {
            Normalizer::stemming()
        } else {
            Normalizer::plain()
        })
    }

    pub fn with_normalizer(normalizer: Normalizer) -> Self {
        Self { normalizer }
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        self.normalizer.tokens(text)
    }

    pub fn score(&self, candidate: &str, reference: &str) -> f64 {
        rouge_l_tokens(&self.tokens(candidate), &self.tokens(reference))
    }

    /// Score matrix with rows = candidates, columns = references.
    pub fn matrix<A: AsRef<str>, B: AsRef<str>>(
        &self,
        candidates: &[A],
        references: &[B],
    ) -> Vec<Vec<f64>> {
        let refs: Vec<Vec<String>> = references.iter().map(|r| self.tokens(r.as_ref())).collect();
        candidates
            .iter()
            .map(|c| {
                let ct = self.tokens(c.as_ref());
                refs.iter().map(|rt| rouge_l_tokens(&ct, rt)).collect()
            })
            .collect()
    }
}

impl Default for RougeScorer {
    fn default() -> Self {
        Self::new(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_examples() {
        assert_eq!(rouge_l_f1("the gap remains", "the gap remains", true), 1.0);
        assert_eq!(rouge_l_f1("alpha beta", "gamma delta", true), 0.0);
        assert_eq!(rouge_l_f1("a b c d", "a c d e", false), 0.75);
        assert_eq!(rouge_l_f1("", "a", true), 0.0);
        assert_eq!(rouge_l_f1("!!", "a", true), 0.0);
    }

    #[test]
    fn stemming_and_punctuation() {
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(
            rouge_l_f1("Studies are needed.", "study is needed", true),
            2.0 / 3.0
        ));
        assert!(close(
            rouge_l_f1("Studies are needed.", "study is needed", false),
            1.0 / 3.0
        ));
        // [non-diabetic, mice] vs [non, diabetic, mice]: L=1, P=1/2, R=1/3
        assert!(close(
            rouge_l_f1("non-diabetic mice", "non diabetic mice", false),
            0.4
        ));
    }

    #[test]
    fn lcs_small_cases() {
        assert_eq!(lcs_len(b"ABCBDAB", b"BDCABA"), 4);
        assert_eq!(lcs_len::<u8>(&[], b"A"), 0);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in proptest::collection::vec(0u8..4, 0..12), b in proptest::collection::vec(0u8..4, 0..12)) {
            let ab = rouge_l_tokens(&a, &b);
            prop_assert_eq!(ab, rouge_l_tokens(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            if !a.is_empty() {
                prop_assert_eq!(rouge_l_tokens(&a, &a), 1.0);
            }
        }
    }
}
