//! Cross-entropy, paragraph and behavior-cloning losses as graph nodes.

use std::collections::BTreeSet;

use crate::cavp::RegionInputs;
use crate::language::decode::{self, Decoded};
use crate::language::paragraph::GraphSentence;
use crate::language::{ParagraphModel, SentenceModel, SentenceState, TokenSequence, Vocabulary, CONTINUE, EOS, STOP};
use crate::substrate::{Graph, Var};
use crate::{Error, Result, Scalar};

/// Floor added inside logarithms of the KL term.
pub const KL_EPS: f64 = 1e-8;
/// Index of the mean-region sentinel in the output sub-policy.
pub const SENTINEL: usize = 2;

/// Articles, prepositions, conjunctions, auxiliaries and punctuation.
pub const FUNCTION_WORDS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "some", "of", "in", "on", "at", "to", "with", "by", "for", "from",
    "into", "onto", "near", "under", "over", "above", "below", "behind", "beside", "between", "next", "across", "around",
    "through", "up", "down", "off", "out", "and", "or", "but", "while", "as", "is", "are", "was", "were", "be", "been",
    "being", "am", "has", "have", "had", "do", "does", "did", "can", "will", "its", "their", "his", "her", "there", ".",
    ",", ";", ":", "!", "?", "'s",
];

/// Heuristic output-policy expert: function words (and EOS) bind to the
/// sentinel, every other word splits evenly between single and composition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expert {
    function_ids: BTreeSet<usize>,
}

impl Expert {
    pub fn from_vocab(vocab: &Vocabulary) -> Self {
        let mut function_ids: BTreeSet<usize> = FUNCTION_WORDS
            .iter()
            .filter(|w| vocab.contains(w))
            .map(|w| vocab.id(w))
            .collect();
        function_ids.insert(EOS);
        Self { function_ids }
    }

    pub fn from_ids(ids: impl IntoIterator<Item = usize>) -> Self {
        Self {
            function_ids: ids.into_iter().collect(),
        }
    }

    /// Target distribution over {single, composition, sentinel} for the
    /// step that emits `token`.
    pub fn policy(&self, token: usize) -> [f64; 3] {
        if self.function_ids.contains(&token) {
            [0.0, 0.0, 1.0]
        } else {
            [0.5, 0.5, 0.0]
        }
    }
}

/// `KL(e ‖ o) = Σ_i e_i (ln(e_i + ε) − ln(o_i + ε))`.
pub fn kl_divergence<T: Scalar>(g: &mut Graph<'_, T>, expert: &[f64; 3], output: Var) -> Result<Var> {
    let eps = g.input(vec![T::of(KL_EPS); 3]);
    let shifted = g.add(output, eps)?;
    let log_o = g.log(shifted)?;
    let e = g.input(expert.iter().map(|&x| T::of(x)).collect());
    let cross = g.dot(e, log_o)?;
    let entropy_part: f64 = expert.iter().map(|&x| x * (x + KL_EPS).ln()).sum();
    let c = g.input(vec![T::of(entropy_part)]);
    let neg = g.scale(cross, -T::one());
    Ok(g.add(c, neg)?)
}

/// `xe + μ Σ_t KL(π^e_t ‖ π^o_t)`.
pub fn behavior_cloning_loss<T: Scalar>(
    g: &mut Graph<'_, T>,
    outputs: &[Var],
    experts: &[[f64; 3]],
    xe: Var,
    mu: f64,
) -> Result<Var> {
    if outputs.len() != experts.len() {
        return Err(Error::Data(format!(
            "{} output distributions but {} expert targets",
            outputs.len(),
            experts.len()
        )));
    }
    let mut terms = vec![xe];
    for (&o, e) in outputs.iter().zip(experts) {
        let kl = kl_divergence(g, e, o)?;
        terms.push(g.scale(kl, T::of(mu)));
    }
    Ok(g.sum(&terms)?)
}

/// `−Σ` of the given log-probability nodes.
pub fn negative_sum<T: Scalar>(g: &mut Graph<'_, T>, log_probs: &[Var]) -> Result<Var> {
    if log_probs.is_empty() {
        return Err(Error::Data("empty target sequence".into()));
    }
    let s = g.sum(log_probs)?;
    Ok(g.scale(s, -T::one()))
}

/// Behavior-cloning options: expert and KL weight `μ`.
#[derive(Debug, Clone, Copy)]
pub struct Cloning<'e> {
    pub expert: &'e Expert,
    pub mu: f64,
}

fn cloning_term<T: Scalar, S>(
    g: &mut Graph<'_, T>,
    d: &Decoded<S>,
    bc: Cloning<'_>,
    loss: Var,
) -> Result<Var> {
    let mut outputs = Vec::new();
    let mut experts = Vec::new();
    for (o, &id) in d.cavp.iter().zip(&d.ids) {
        if let Some(dist) = o.output {
            outputs.push(dist);
            experts.push(bc.expert.policy(id));
        }
    }
    if outputs.is_empty() {
        return Ok(loss);
    }
    behavior_cloning_loss(g, &outputs, &experts, loss, bc.mu)
}

/// Teacher-forced cross-entropy `−Σ_t log π(y_t | y_{<t})`, optionally with
/// the behavior-cloning term. Returns the loss and the forced decode.
pub fn xe_loss<T: Scalar>(
    g: &mut Graph<'_, T>,
    model: &SentenceModel,
    regions: &RegionInputs,
    y: &TokenSequence,
    bc: Option<Cloning<'_>>,
) -> Result<(Var, Decoded<SentenceState>)> {
    let dec = crate::language::SentenceDecoder {
        model,
        regions: regions.clone(),
    };
    let init = model.init_state(g);
    let d = decode::teacher_forced(g, &dec, init, y.ids())?;
    let xe = negative_sum(g, &d.token_log_probs)?;
    let loss = match bc {
        Some(bc) => cloning_term(g, &d, bc, xe)?,
        None => xe,
    };
    Ok((loss, d))
}

/// `λ_w · word XE + λ_s · stop XE`, where the stop label is STOP on the last
/// sentence and CONTINUE elsewhere.
pub fn paragraph_xe_loss<T: Scalar>(
    g: &mut Graph<'_, T>,
    model: &ParagraphModel,
    regions: &RegionInputs,
    paragraph: &[TokenSequence],
    lambda_w: f64,
    lambda_s: f64,
    bc: Option<Cloning<'_>>,
) -> Result<(Var, Vec<GraphSentence>)> {
    let sents = model.teacher_forced(g, regions, paragraph)?;
    let n = sents.len();
    let mut word_terms = Vec::new();
    let mut stop_terms = Vec::new();
    let mut bc_outputs = Vec::new();
    let mut bc_experts = Vec::new();
    for (i, s) in sents.iter().enumerate() {
        word_terms.extend_from_slice(&s.token_log_probs);
        let label = if i + 1 == n { STOP } else { CONTINUE };
        stop_terms.push(g.select(s.lp.stop_log_probs, label)?);
        if let Some(bc) = bc {
            for (o, &id) in s.word_cavp.iter().zip(&s.ids) {
                if let Some(dist) = o.output {
                    bc_outputs.push(dist);
                    bc_experts.push(bc.expert.policy(id));
                }
            }
        }
    }
    let words = negative_sum(g, &word_terms)?;
    let stops = negative_sum(g, &stop_terms)?;
    let a = g.scale(words, T::of(lambda_w));
    let b = g.scale(stops, T::of(lambda_s));
    let mut loss = g.add(a, b)?;
    if let Some(bc) = bc {
        if !bc_outputs.is_empty() {
            loss = behavior_cloning_loss(g, &bc_outputs, &bc_experts, loss, bc.mu)?;
        }
    }
    Ok((loss, sents))
}
