use crate::{MetricError, Token};

/// Recall weight in the ROUGE-L F-measure.
pub const DEFAULT_BETA: f64 = 1.2;

/// Length of the longest common subsequence, using two DP rows.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L: LCS-based F-measure, maximised over references.
pub fn rouge_l<T: Token, R: AsRef<[T]>>(candidate: &[T], references: &[R], beta: f64) -> Result<f64, MetricError> {
    if references.is_empty() {
        return Err(MetricError::NoReferences);
    }
    let mut best = 0.0f64;
    for r in references {
        let r = r.as_ref();
        let lcs = lcs_len(candidate, r);
        if lcs == 0 {
            continue;
        }
        let p = lcs as f64 / candidate.len() as f64;
        let rec = lcs as f64 / r.len() as f64;
        let b2 = beta * beta;
        let f = (1.0 + b2) * p * rec / (rec + b2 * p);
        best = best.max(f);
    }
    Ok(best)
}
