//! Generic sub-policy network: an LSTM state encoder followed by additive
//! attention over a set of candidate features.
//!
//! `h_t = LSTM(s_t, h_{t-1})`,
//! `π(a_t = i) = softmax_i(w_aᵀ tanh(W_h h_t + W_q q_i))`,
//! `f = Σ_i π(a_t = i) q_i`.

use rand::Rng;

use crate::substrate::{Graph, LstmWeights, ParamId, ParamStore, Var};
use crate::{Error, Result, Scalar};

/// State shared by every sub-policy at one step: `[h^l_{t-1}, r̄, W_e Π(y_{t-1})]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyState {
    pub lp_hidden: Var,
    pub mean_region: Var,
    pub prev_word_embed: Var,
    concat: Var,
}

impl PolicyState {
    pub fn new<T: Scalar>(g: &mut Graph<'_, T>, lp_hidden: Var, mean_region: Var, prev_word_embed: Var) -> Self {
        let concat = g.concat(&[lp_hidden, mean_region, prev_word_embed]);
        Self {
            lp_hidden,
            mean_region,
            prev_word_embed,
            concat,
        }
    }

    /// The concatenated state vector fed to sub-policy LSTMs.
    pub fn vector(&self) -> Var {
        self.concat
    }
}

/// Additive-attention parameters: `w_a [1 × A]`, `W_h [A × H]`, `W_q [A × D']`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionWeights {
    pub w_a: ParamId,
    pub w_h: ParamId,
    pub w_q: ParamId,
}

impl AttentionWeights {
    pub fn register<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        hidden_size: usize,
        feature_dim: usize,
        attn_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            w_a: store.add_uniform(format!("{prefix}.w_a"), 1, attn_size, rng)?,
            w_h: store.add_uniform(format!("{prefix}.W_h"), attn_size, hidden_size, rng)?,
            w_q: store.add_uniform(format!("{prefix}.W_q"), attn_size, feature_dim, rng)?,
        })
    }
}

/// One sub-policy network: its (possibly shared) LSTM and its own attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubPolicy {
    pub lstm: LstmWeights,
    pub attention: AttentionWeights,
}

/// LSTM state carried by a sub-policy across decode steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recurrent {
    pub h: Var,
    pub c: Var,
}

impl Recurrent {
    pub fn zeros<T: Scalar>(g: &mut Graph<'_, T>, hidden: usize) -> Self {
        Self {
            h: g.zeros(hidden),
            c: g.zeros(hidden),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionResult {
    pub distribution: Var,
    pub pooled: Var,
    pub lstm_hidden: Var,
    pub lstm_cell_state: Var,
}

/// Checks that the action space is non-empty and homogeneous.
fn check_features<T: Scalar>(g: &Graph<'_, T>, features: &[Var]) -> Result<usize> {
    let first = features.first().ok_or(Error::EmptyActionSpace)?;
    let dim = g.len_of(*first);
    for f in features {
        if g.len_of(*f) != dim {
            return Err(crate::substrate::SubstrateError::DimensionMismatch {
                op: "sp_step features",
                left: vec![dim],
                right: vec![g.len_of(*f)],
            }
            .into());
        }
    }
    Ok(dim)
}

/// Scores `features` against the encoded hidden state and pools them.
/// Returns `(distribution, pooled)`.
pub fn attend<T: Scalar>(
    g: &mut Graph<'_, T>,
    weights: &AttentionWeights,
    hidden: Var,
    features: &[Var],
) -> Result<(Var, Var)> {
    check_features(g, features)?;
    let projected_state = g.affine(weights.w_h, hidden, None)?;
    let mut scores = Vec::with_capacity(features.len());
    for &q in features {
        let projected = g.affine(weights.w_q, q, None)?;
        let pre = g.add(projected_state, projected)?;
        let act = g.tanh(pre);
        scores.push(g.affine(weights.w_a, act, None)?);
    }
    let scores = g.concat(&scores);
    let distribution = g.softmax(scores)?;
    let pooled = g.weighted_sum(distribution, features)?;
    Ok((distribution, pooled))
}

/// Full sub-policy step: encode the state, then attend over `features`.
pub fn sp_step<T: Scalar>(
    g: &mut Graph<'_, T>,
    policy: &SubPolicy,
    state: &PolicyState,
    features: &[Var],
    recurrent: Recurrent,
) -> Result<AttentionResult> {
    check_features(g, features)?;
    let (h, c) = g.lstm_cell(&policy.lstm, state.vector(), recurrent.h, recurrent.c)?;
    let (distribution, pooled) = attend(g, &policy.attention, h, features)?;
    Ok(AttentionResult {
        distribution,
        pooled,
        lstm_hidden: h,
        lstm_cell_state: c,
    })
}

/// Index of the largest probability; ties go to the lowest index.
pub fn hard_argmax<T: Scalar>(distribution: &[T]) -> usize {
    let mut best = 0;
    for (i, &p) in distribution.iter().enumerate() {
        if p > distribution[best] {
            best = i;
        }
    }
    best
}
