#![allow(dead_code)]

use cavp_core::cavp::{CavpConfig, CavpVariant, ContextMode, RegionFeatureSet};
use cavp_core::language::{Mode, ModelConfig, TokenSequence, WordContext, EOS};
use cavp_core::substrate::{Graph, ParamId, ParamStore, Tensor, Var};
use rand::Rng;

pub const H: usize = 32;
pub const E: usize = 16;
pub const D: usize = 24;
pub const K: usize = 6;
pub const V: usize = 30;
pub const T: usize = 8;

pub fn cavp_config(share_lstm: bool, context_mode: ContextMode, variant: CavpVariant) -> CavpConfig {
    CavpConfig {
        context_mode,
        share_lstm,
        hidden_size: H,
        attn_size: H,
        embed_size: E,
        variant,
    }
}

pub fn model_config(mode: Mode, vocab_size: usize, cavp: CavpConfig) -> ModelConfig {
    ModelConfig {
        mode,
        vocab_size,
        region_dim: D,
        cavp,
        word_context: WordContext::SentenceOutputs,
    }
}

/// Desk-scale configuration with shared LSTMs and full-history context.
pub fn desk(mode: Mode) -> ModelConfig {
    model_config(mode, V, cavp_config(true, ContextMode::FullHistory, CavpVariant::Full))
}

pub fn small(mode: Mode, vocab_size: usize) -> ModelConfig {
    let cavp = CavpConfig {
        hidden_size: 8,
        attn_size: 8,
        embed_size: 6,
        ..CavpConfig::desk()
    };
    ModelConfig {
        mode,
        vocab_size,
        region_dim: 10,
        cavp,
        word_context: WordContext::SentenceOutputs,
    }
}

pub fn regions<R: Rng>(rng: &mut R, k: usize, dim: usize) -> RegionFeatureSet<f64> {
    let rows = (0..k).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    RegionFeatureSet::new(rows).unwrap()
}

/// `len` content tokens from the non-reserved ids followed by EOS.
pub fn caption<R: Rng>(rng: &mut R, vocab_size: usize, len: usize) -> TokenSequence {
    let mut ids: Vec<usize> = (0..len).map(|_| rng.gen_range(4..vocab_size)).collect();
    ids.push(EOS);
    TokenSequence::new(ids).unwrap()
}

pub fn vector<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Registers an `n × 1` parameter so a vector can receive gradients.
pub fn add_vector(store: &mut ParamStore<f64>, name: &str, values: Vec<f64>) -> ParamId {
    let n = values.len();
    store.add(name, Tensor::new(vec![n, 1], values).unwrap()).unwrap()
}

/// Reads an `n × 1` parameter as a graph node.
pub fn read_vector(g: &mut Graph<'_, f64>, id: ParamId) -> Var {
    let one = g.input(vec![1.0]);
    g.affine(id, one, None).unwrap()
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub fn bits(store: &ParamStore<f64>) -> Vec<u64> {
    store.iter().flat_map(|(_, p)| p.value.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>()).collect()
}
