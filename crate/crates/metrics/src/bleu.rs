use crate::ngram::{NGramStats, MAX_ORDER};
use crate::{MetricError, Token};

/// Value substituted for a zero modified precision in sentence-level BLEU,
/// so that rewards stay finite and strictly ordered.
pub const SENTENCE_SMOOTHING: f64 = 1e-9;

/// Sufficient statistics for BLEU: clipped matches and candidate n-gram
/// totals per order, plus candidate and effective reference lengths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub clipped: [usize; MAX_ORDER],
    pub total: [usize; MAX_ORDER],
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuStats {
    pub fn from_pair<T: Token, R: AsRef<[T]>>(candidate: &[T], references: &[R]) -> Self {
        let cand = NGramStats::from_tokens(candidate, MAX_ORDER);
        let refs: Vec<NGramStats<T>> = references
            .iter()
            .map(|r| NGramStats::from_tokens(r.as_ref(), MAX_ORDER))
            .collect();

        let mut stats = BleuStats {
            candidate_len: candidate.len(),
            reference_len: closest_ref_len(candidate.len(), references.iter().map(|r| r.as_ref().len())),
            ..Default::default()
        };
        for (gram, count) in cand.iter() {
            let order = gram.len() - 1;
            let max_ref = refs.iter().map(|r| r.count(gram)).max().unwrap_or(0);
            stats.clipped[order] += count.min(max_ref);
            stats.total[order] += count;
        }
        stats
    }

    pub fn accumulate(&mut self, other: &BleuStats) {
        for i in 0..MAX_ORDER {
            self.clipped[i] += other.clipped[i];
            self.total[i] += other.total[i];
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
    }

    /// BLEU-`n` from the accumulated statistics. With `smoothing` set, zero
    /// precisions are replaced by that value; without it any zero precision
    /// gives a score of 0.
    pub fn score(&self, n: usize, smoothing: Option<f64>) -> Result<f64, MetricError> {
        if n == 0 || n > MAX_ORDER {
            return Err(MetricError::InvalidOrder(n));
        }
        if self.candidate_len == 0 {
            return Ok(0.0);
        }
        let mut log_sum = 0.0;
        for k in 0..n {
            let p = if self.clipped[k] == 0 {
                match smoothing {
                    Some(eps) => eps,
                    None => return Ok(0.0),
                }
            } else {
                self.clipped[k] as f64 / self.total[k] as f64
            };
            log_sum += p.ln();
        }
        let c = self.candidate_len as f64;
        let r = self.reference_len as f64;
        let brevity = (1.0 - r / c).exp().min(1.0);
        Ok(brevity * (log_sum / n as f64).exp())
    }
}

/// Reference length closest to the candidate length; ties go to the shorter.
fn closest_ref_len(cand_len: usize, ref_lens: impl Iterator<Item = usize>) -> usize {
    ref_lens
        .min_by_key(|&r| (r.abs_diff(cand_len), r))
        .unwrap_or(0)
}

/// Sentence-level BLEU-`n` with [`SENTENCE_SMOOTHING`].
pub fn bleu<T: Token, R: AsRef<[T]>>(
    candidate: &[T],
    references: &[R],
    n: usize,
) -> Result<f64, MetricError> {
    if references.is_empty() {
        return Err(MetricError::NoReferences);
    }
    BleuStats::from_pair(candidate, references).score(n, Some(SENTENCE_SMOOTHING))
}

/// Corpus-level BLEU-`n`: statistics are summed over all pairs before the
/// precisions are formed. No smoothing.
pub fn corpus_bleu<T, C, R>(pairs: &[(C, Vec<R>)], n: usize) -> Result<f64, MetricError>
where
    T: Token,
    C: AsRef<[T]>,
    R: AsRef<[T]>,
{
    let mut total = BleuStats::default();
    for (cand, refs) in pairs {
        if refs.is_empty() {
            return Err(MetricError::NoReferences);
        }
        total.accumulate(&BleuStats::from_pair(cand.as_ref(), refs));
    }
    total.score(n, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_pair_scores_one() {
        let c = toks("a man riding a brown horse");
        for n in 1..=4 {
            assert!((bleu(&c, std::slice::from_ref(&c), n).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn clipped_unigram_precision() {
        let c = toks("the the the the");
        let r = toks("the cat");
        assert_eq!(bleu(&c, &[r], 1).unwrap(), 0.25);
    }

    #[test]
    fn empty_candidate_is_zero() {
        let c: Vec<&str> = vec![];
        assert_eq!(bleu(&c, &[toks("a b")], 4).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let c = toks("a");
        assert_eq!(bleu(&c, std::slice::from_ref(&c), 5), Err(MetricError::InvalidOrder(5)));
        let none: Vec<Vec<&str>> = vec![];
        assert_eq!(bleu(&c, &none, 1), Err(MetricError::NoReferences));
    }

    #[test]
    fn brevity_penalty_uses_closest_reference() {
        // c = 2, refs of length 3 and 1: tie at distance 1 goes to the shorter (1), BP = 1.
        let c = toks("a b");
        let refs = vec![toks("a b c"), toks("a")];
        assert!((bleu(&c, &refs, 1).unwrap() - 1.0).abs() < 1e-15);
        // Only the longer reference: BP = exp(1 - 3/2).
        let s = bleu(&c, &[toks("a b c")], 1).unwrap();
        assert!((s - (1.0f64 - 1.5).exp()).abs() < 1e-15);
    }

    #[test]
    fn corpus_of_one_matches_sentence() {
        let c = toks("a man riding a horse on the beach");
        let r = vec![toks("a man is riding a horse on a beach")];
        for n in 1..=4 {
            let s = bleu(&c, &r, n).unwrap();
            let k = corpus_bleu(&[(c.clone(), r.clone())], n).unwrap();
            assert_eq!(s, k);
        }
    }
}
