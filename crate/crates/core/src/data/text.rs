use std::collections::BTreeMap;

use crate::language::{vocab::RESERVED, Vocabulary};
use crate::{Error, Result};

/// Lowercases, splits on whitespace and strips leading and trailing ASCII
/// punctuation from each token; empty tokens are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Joins tokens with single spaces.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ")
}

/// First `max_len` tokens.
pub fn trim<S: Clone>(tokens: &[S], max_len: usize) -> Vec<S> {
    tokens.iter().take(max_len).cloned().collect()
}

/// Keeps tokens seen at least `min_count` times, ordered by descending
/// count and then alphabetically.
pub fn build_vocab<S: AsRef<str>>(corpus: &[Vec<S>], min_count: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for sentence in corpus {
        for t in sentence {
            *counts.entry(t.as_ref()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_count && !RESERVED.contains(&t))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    Vocabulary::from_words(kept.into_iter().map(|(t, _)| t.to_string()))
}
