//! Brute-force reference implementations of BLEU, CIDEr-D and ROUGE-L.
//!
//! Deliberately naive: n-grams are counted by rescanning every window, no
//! maps are used, and the LCS is computed from the full table.

#![allow(dead_code)]

pub fn occurrences(seq: &[u32], gram: &[u32]) -> usize {
    if gram.is_empty() || seq.len() < gram.len() {
        return 0;
    }
    (0..=seq.len() - gram.len())
        .filter(|&i| &seq[i..i + gram.len()] == gram)
        .count()
}

/// Distinct n-grams of order `n`, in order of first appearance.
pub fn distinct_grams(seq: &[u32], n: usize) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = Vec::new();
    if seq.len() < n {
        return out;
    }
    for i in 0..=seq.len() - n {
        let g = seq[i..i + n].to_vec();
        if !out.contains(&g) {
            out.push(g);
        }
    }
    out
}

pub fn bleu(cand: &[u32], refs: &[Vec<u32>], n: usize, smoothing: Option<f64>) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let mut log_p = 0.0;
    for k in 1..=n {
        let mut clipped = 0usize;
        for g in distinct_grams(cand, k) {
            let c = occurrences(cand, &g);
            let m = refs.iter().map(|r| occurrences(r, &g)).max().unwrap();
            clipped += c.min(m);
        }
        let total = if cand.len() >= k { cand.len() - k + 1 } else { 0 };
        let p = if clipped == 0 {
            match smoothing {
                Some(e) => e,
                None => return 0.0,
            }
        } else {
            clipped as f64 / total as f64
        };
        log_p += p.ln();
    }
    let c = cand.len() as f64;
    let mut best = refs[0].len();
    for r in refs {
        let d = (r.len() as i64 - cand.len() as i64).abs();
        let bd = (best as i64 - cand.len() as i64).abs();
        if d < bd || (d == bd && r.len() < best) {
            best = r.len();
        }
    }
    let bp = if c > best as f64 { 1.0 } else { (1.0 - best as f64 / c).exp() };
    bp * (log_p / n as f64).exp()
}

pub fn df(corpus: &[Vec<Vec<u32>>], gram: &[u32]) -> usize {
    corpus
        .iter()
        .filter(|refs| refs.iter().any(|r| occurrences(r, gram) > 0))
        .count()
}

fn weights(seq: &[u32], n: usize, corpus: &[Vec<Vec<u32>>]) -> Vec<(Vec<u32>, f64)> {
    let big_n = corpus.len() as f64;
    distinct_grams(seq, n)
        .into_iter()
        .map(|g| {
            let d = df(corpus, &g).max(1) as f64;
            let w = occurrences(seq, &g) as f64 * (big_n.ln() - d.ln());
            (g, w)
        })
        .collect()
}

pub fn cider_d(cand: &[u32], refs: &[Vec<u32>], corpus: &[Vec<Vec<u32>>], sigma: f64) -> f64 {
    let mut total = 0.0;
    for n in 1..=4 {
        let h = weights(cand, n, corpus);
        let nh = h.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        for r in refs {
            let rv = weights(r, n, corpus);
            let nr = rv.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
            let mut dot = 0.0;
            for (g, wh) in &h {
                for (g2, wr) in &rv {
                    if g == g2 {
                        dot += wh.min(*wr) * wr;
                    }
                }
            }
            if nh != 0.0 && nr != 0.0 {
                dot /= nh * nr;
            }
            let delta = cand.len() as f64 - r.len() as f64;
            total += dot * (-(delta * delta) / (2.0 * sigma * sigma)).exp();
        }
    }
    total / 4.0 / refs.len() as f64 * 10.0
}

pub fn lcs(a: &[u32], b: &[u32]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t[a.len()][b.len()]
}

pub fn rouge_l(cand: &[u32], refs: &[Vec<u32>], beta: f64) -> f64 {
    let mut best = 0.0f64;
    for r in refs {
        let l = lcs(cand, r) as f64;
        if l == 0.0 {
            continue;
        }
        let p = l / cand.len() as f64;
        let rec = l / r.len() as f64;
        best = best.max((1.0 + beta * beta) * p * rec / (rec + beta * beta * p));
    }
    best
}
