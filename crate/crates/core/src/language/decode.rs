//! Decoding strategies shared by the sentence and paragraph models.

use rand::Rng;

use crate::attention::hard_argmax;
use crate::cavp::CavpOutput;
use crate::language::vocab::{BOS, EOS, PAD};
use crate::substrate::{Graph, Var};
use crate::{Error, Result, Scalar};

/// One decode step's results.
#[derive(Debug, Clone)]
pub struct StepOutput<S> {
    /// Log-probabilities over the vocabulary.
    pub log_probs: Var,
    pub state: S,
    pub cavp: CavpOutput,
}

/// A word-level policy that can be advanced one token at a time.
pub trait StepDecoder<T: Scalar> {
    type State: Clone;

    fn vocab_size(&self) -> usize;

    /// Consumes `prev` (BOS at the first step) and predicts the next token.
    fn step(&self, g: &mut Graph<'_, T>, state: &Self::State, prev: usize) -> Result<StepOutput<Self::State>>;
}

/// A decoded token sequence together with the graph nodes that produced it.
#[derive(Debug, Clone)]
pub struct Decoded<S> {
    /// Emitted ids; the last one is EOS unless `max_len` was reached.
    pub ids: Vec<usize>,
    /// Log-probability node of each emitted id.
    pub token_log_probs: Vec<Var>,
    /// Full log-probability vector of each step.
    pub step_log_probs: Vec<Var>,
    pub cavp: Vec<CavpOutput>,
    pub state: S,
}

impl<S> Decoded<S> {
    pub fn log_prob<T: Scalar>(&self, g: &Graph<'_, T>) -> f64 {
        self.token_log_probs.iter().map(|&v| g.scalar(v).as_f64()).sum()
    }
}

fn run<T: Scalar, D: StepDecoder<T>>(
    g: &mut Graph<'_, T>,
    dec: &D,
    init: D::State,
    max_len: usize,
    mut choose: impl FnMut(&[T]) -> usize,
) -> Result<Decoded<D::State>> {
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let mut out = Decoded {
        ids: Vec::new(),
        token_log_probs: Vec::new(),
        step_log_probs: Vec::new(),
        cavp: Vec::new(),
        state: init,
    };
    let mut prev = BOS;
    while out.ids.len() < max_len {
        let step = dec.step(g, &out.state, prev)?;
        let id = choose(g.value(step.log_probs));
        out.token_log_probs.push(g.select(step.log_probs, id)?);
        out.step_log_probs.push(step.log_probs);
        out.cavp.push(step.cavp);
        out.state = step.state;
        out.ids.push(id);
        if id == EOS {
            break;
        }
        prev = id;
    }
    Ok(out)
}

/// Argmax decoding; ties go to the lowest id.
pub fn greedy<T: Scalar, D: StepDecoder<T>>(
    g: &mut Graph<'_, T>,
    dec: &D,
    init: D::State,
    max_len: usize,
) -> Result<Decoded<D::State>> {
    run(g, dec, init, max_len, hard_argmax)
}

/// Draws an index from log-probabilities by inverse CDF.
pub fn sample_index<T: Scalar, R: Rng>(log_probs: &[T], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, lp) in log_probs.iter().enumerate() {
        let p = lp.as_f64().exp();
        if p > 0.0 {
            last_positive = i;
        }
        cum += p;
        if u < cum {
            return i;
        }
    }
    last_positive
}

/// Multinomial sampling from each step's distribution.
pub fn sample<T: Scalar, D: StepDecoder<T>, R: Rng>(
    g: &mut Graph<'_, T>,
    dec: &D,
    init: D::State,
    max_len: usize,
    rng: &mut R,
) -> Result<Decoded<D::State>> {
    run(g, dec, init, max_len, |lp| sample_index(lp, rng))
}

/// Feeds `targets` as the ground-truth prefix and returns the log-probability
/// node of each target. PAD targets are skipped.
pub fn teacher_forced<T: Scalar, D: StepDecoder<T>>(
    g: &mut Graph<'_, T>,
    dec: &D,
    init: D::State,
    targets: &[usize],
) -> Result<Decoded<D::State>> {
    if targets.is_empty() {
        return Err(Error::Data("empty target sequence".into()));
    }
    let v = dec.vocab_size();
    let mut out = Decoded {
        ids: Vec::new(),
        token_log_probs: Vec::new(),
        step_log_probs: Vec::new(),
        cavp: Vec::new(),
        state: init,
    };
    let mut prev = BOS;
    for &y in targets {
        if y == PAD {
            break;
        }
        if y >= v || y == BOS {
            return Err(Error::Data(format!("token id {y} is not an emittable id of a vocabulary of {v}")));
        }
        let step = dec.step(g, &out.state, prev)?;
        out.token_log_probs.push(g.select(step.log_probs, y)?);
        out.step_log_probs.push(step.log_probs);
        out.cavp.push(step.cavp);
        out.state = step.state;
        out.ids.push(y);
        prev = y;
    }
    Ok(out)
}

/// Result of beam search.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamResult {
    pub ids: Vec<usize>,
    /// Sum of token log-probabilities.
    pub log_prob: f64,
    /// `log_prob / ids.len()`, the ranking score.
    pub score: f64,
}

struct Hypothesis<S> {
    ids: Vec<usize>,
    log_prob: f64,
    state: S,
}

/// Beam search ranked by length-normalized log-probability. Hypotheses end
/// at EOS or at `max_len`; `beam_size = 1` reproduces greedy decoding.
pub fn beam<T: Scalar, D: StepDecoder<T>>(
    g: &mut Graph<'_, T>,
    dec: &D,
    init: D::State,
    beam_size: usize,
    max_len: usize,
) -> Result<BeamResult> {
    if beam_size == 0 {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let mut alive = vec![Hypothesis {
        ids: Vec::new(),
        log_prob: 0.0,
        state: init,
    }];
    let mut finished: Vec<BeamResult> = Vec::new();
    while !alive.is_empty() {
        // (parent, token, total log-prob, step log-prob, next state)
        let mut candidates: Vec<(usize, usize, f64, f64, usize)> = Vec::new();
        let mut states = Vec::with_capacity(alive.len());
        for (hi, h) in alive.iter().enumerate() {
            let prev = h.ids.last().copied().unwrap_or(BOS);
            let step = dec.step(g, &h.state, prev)?;
            let lp = g.value(step.log_probs);
            for (tok, &l) in lp.iter().enumerate() {
                if l.as_f64() == f64::NEG_INFINITY {
                    continue;
                }
                candidates.push((hi, tok, h.log_prob + l.as_f64(), l.as_f64(), states.len()));
            }
            states.push(step.state);
        }
        // The step log-prob breaks rounding ties in the running sum; the
        // stable sort then keeps parent and token order.
        candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(b.3.total_cmp(&a.3)));
        candidates.truncate(beam_size);
        let mut next = Vec::with_capacity(beam_size);
        for (hi, tok, lp, _, si) in candidates {
            let mut ids = alive[hi].ids.clone();
            ids.push(tok);
            if tok == EOS || ids.len() >= max_len {
                let n = ids.len() as f64;
                finished.push(BeamResult {
                    ids,
                    log_prob: lp,
                    score: lp / n,
                });
            } else {
                next.push(Hypothesis {
                    ids,
                    log_prob: lp,
                    state: states[si].clone(),
                });
            }
        }
        alive = next;
    }
    let mut best = 0;
    for (i, f) in finished.iter().enumerate() {
        if f.score > finished[best].score {
            best = i;
        }
    }
    Ok(finished.swap_remove(best))
}
