use std::collections::{BTreeMap, BTreeSet};

use crate::ngram::{NGramStats, MAX_ORDER};
use crate::{MetricError, Token};

/// Width of the Gaussian length penalty in CIDEr-D.
pub const DEFAULT_SIGMA: f64 = 6.0;

/// Document frequencies of n-grams over a reference corpus, where each
/// document is the full reference set of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable<T: Token> {
    df: BTreeMap<Vec<T>, usize>,
    num_documents: usize,
}

impl<T: Token> Default for IdfTable<T> {
    fn default() -> Self {
        Self {
            df: BTreeMap::new(),
            num_documents: 0,
        }
    }
}

impl<T: Token> IdfTable<T> {
    pub fn num_documents(&self) -> usize {
        self.num_documents
    }

    pub fn df(&self, gram: &[T]) -> usize {
        self.df.get(gram).copied().unwrap_or(0)
    }

    /// `ln(N / max(1, df))`. N-grams never seen in the corpus get `ln N`.
    pub fn idf(&self, gram: &[T]) -> f64 {
        let n = self.num_documents as f64;
        n.ln() - (self.df(gram).max(1) as f64).ln()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<T>, usize)> {
        self.df.iter().map(|(g, &d)| (g, d))
    }
}

/// Builds document frequencies: an n-gram counts once per image whose
/// reference set contains it at least once.
pub fn build_idf<T: Token, R: AsRef<[T]>, S: AsRef<[R]>>(corpus: &[S]) -> IdfTable<T> {
    let mut df: BTreeMap<Vec<T>, usize> = BTreeMap::new();
    for refs in corpus {
        let mut seen: BTreeSet<Vec<T>> = BTreeSet::new();
        for r in refs.as_ref() {
            let stats = NGramStats::from_tokens(r.as_ref(), MAX_ORDER);
            for (gram, _) in stats.iter() {
                seen.insert(gram.clone());
            }
        }
        for gram in seen {
            *df.entry(gram).or_insert(0) += 1;
        }
    }
    IdfTable {
        df,
        num_documents: corpus.len(),
    }
}

struct TfIdf<T: Token> {
    vectors: [BTreeMap<Vec<T>, f64>; MAX_ORDER],
    norms: [f64; MAX_ORDER],
    len: usize,
}

fn tf_idf<T: Token>(tokens: &[T], idf: &IdfTable<T>) -> TfIdf<T> {
    let stats = NGramStats::from_tokens(tokens, MAX_ORDER);
    let mut vectors: [BTreeMap<Vec<T>, f64>; MAX_ORDER] = Default::default();
    let mut norms = [0.0; MAX_ORDER];
    for (gram, count) in stats.iter() {
        let n = gram.len() - 1;
        let w = count as f64 * idf.idf(gram);
        norms[n] += w * w;
        vectors[n].insert(gram.clone(), w);
    }
    for norm in norms.iter_mut() {
        *norm = norm.sqrt();
    }
    TfIdf {
        vectors,
        norms,
        len: tokens.len(),
    }
}

fn similarity<T: Token>(cand: &TfIdf<T>, reference: &TfIdf<T>, clip: bool, sigma: Option<f64>) -> [f64; MAX_ORDER] {
    let mut val = [0.0; MAX_ORDER];
    let penalty = match sigma {
        Some(s) => {
            let delta = cand.len as f64 - reference.len as f64;
            (-(delta * delta) / (2.0 * s * s)).exp()
        }
        None => 1.0,
    };
    for (n, v) in val.iter_mut().enumerate() {
        for (gram, &h) in &cand.vectors[n] {
            if let Some(&r) = reference.vectors[n].get(gram) {
                let h = if clip { h.min(r) } else { h };
                *v += h * r;
            }
        }
        if cand.norms[n] != 0.0 && reference.norms[n] != 0.0 {
            *v /= cand.norms[n] * reference.norms[n];
        }
        *v *= penalty;
    }
    val
}

fn score<T: Token, R: AsRef<[T]>>(
    candidate: &[T],
    references: &[R],
    idf: &IdfTable<T>,
    clip: bool,
    sigma: Option<f64>,
) -> Result<f64, MetricError> {
    if idf.num_documents() == 0 {
        return Err(MetricError::MissingIdf);
    }
    if references.is_empty() {
        return Err(MetricError::NoReferences);
    }
    let cand = tf_idf(candidate, idf);
    let mut sums = [0.0; MAX_ORDER];
    for r in references {
        let rv = tf_idf(r.as_ref(), idf);
        let sim = similarity(&cand, &rv, clip, sigma);
        for n in 0..MAX_ORDER {
            sums[n] += sim[n];
        }
    }
    let mean_over_orders = sums.iter().sum::<f64>() / MAX_ORDER as f64;
    Ok(mean_over_orders / references.len() as f64 * 10.0)
}

/// CIDEr-D: clipped tf-idf cosine per order with a Gaussian length penalty,
/// averaged over references and orders 1..=4, scaled by 10.
pub fn cider_d<T: Token, R: AsRef<[T]>>(
    candidate: &[T],
    references: &[R],
    idf: &IdfTable<T>,
    sigma: f64,
) -> Result<f64, MetricError> {
    score(candidate, references, idf, true, Some(sigma))
}

/// Plain CIDEr (no clipping, no length penalty), on the same ×10 scale.
pub fn cider<T: Token, R: AsRef<[T]>>(
    candidate: &[T],
    references: &[R],
    idf: &IdfTable<T>,
) -> Result<f64, MetricError> {
    score(candidate, references, idf, false, None)
}

/// Mean CIDEr-D over images.
pub fn corpus_cider_d<T, C, R>(pairs: &[(C, Vec<R>)], idf: &IdfTable<T>, sigma: f64) -> Result<f64, MetricError>
where
    T: Token,
    C: AsRef<[T]>,
    R: AsRef<[T]>,
{
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (cand, refs) in pairs {
        total += cider_d(cand.as_ref(), refs, idf, sigma)?;
    }
    Ok(total / pairs.len() as f64)
}
