use std::collections::BTreeMap;

use crate::Token;

/// Highest n-gram order used by BLEU and CIDEr.
pub const MAX_ORDER: usize = 4;

/// Counts of all n-grams of orders `1..=max_order` in a token sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramStats<T: Token> {
    counts: BTreeMap<Vec<T>, usize>,
    max_order: usize,
}

impl<T: Token> NGramStats<T> {
    pub fn from_tokens(tokens: &[T], max_order: usize) -> Self {
        let mut counts = BTreeMap::new();
        for n in 1..=max_order {
            if tokens.len() < n {
                break;
            }
            for window in tokens.windows(n) {
                *counts.entry(window.to_vec()).or_insert(0) += 1;
            }
        }
        Self { counts, max_order }
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn count(&self, gram: &[T]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    /// Iterates over the stored n-grams of exactly order `n`.
    pub fn of_order(&self, n: usize) -> impl Iterator<Item = (&Vec<T>, usize)> {
        self.counts
            .iter()
            .filter(move |(g, _)| g.len() == n)
            .map(|(g, &c)| (g, c))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<T>, usize)> {
        self.counts.iter().map(|(g, &c)| (g, c))
    }

    /// Total number of n-grams of order `n` (with multiplicity).
    pub fn total(&self, n: usize) -> usize {
        self.of_order(n).map(|(_, c)| c).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_follow_window_count() {
        let toks = ["a", "b", "a", "b", "c"];
        let stats = NGramStats::from_tokens(&toks, 4);
        for n in 1..=4 {
            assert_eq!(stats.total(n), toks.len() - n + 1);
        }
        assert_eq!(stats.count(&["a", "b"]), 2);
        assert_eq!(stats.count(&["c"]), 1);
        assert!(stats.iter().all(|(_, c)| c >= 1));
    }

    #[test]
    fn short_sequences_have_no_high_orders() {
        let stats = NGramStats::from_tokens(&["x", "y"], 4);
        assert_eq!(stats.total(3), 0);
        assert_eq!(stats.total(2), 1);
    }
}
