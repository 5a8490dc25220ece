//! Single-sentence captioner: CAVP feeding an LSTM language policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{PolicyState, Recurrent};
use crate::cavp::{AttentionTrace, Cavp, CavpRecurrent, RegionFeatureSet, RegionInputs};
use crate::language::decode::{self, Decoded, StepDecoder, StepOutput};
use crate::language::{trace, word_log_probs, ModelConfig, TokenSequence, Vocabulary};
use crate::substrate::{Graph, LstmWeights, ParamId, ParamStore, Var};
use crate::{Result, Scalar};

/// Parameter handles of the sentence model.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceModel {
    config: ModelConfig,
    pub embed: ParamId,
    pub cavp: Cavp,
    pub lp: LstmWeights,
    pub w_y: ParamId,
    pub b_y: ParamId,
}

/// Recurrent state carried between words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceState {
    pub lp: Recurrent,
    pub cavp: CavpRecurrent,
    /// Visual outputs of earlier steps.
    pub pool: Vec<Var>,
}

impl SentenceModel {
    pub fn register<T: Scalar, R: Rng>(store: &mut ParamStore<T>, config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (v, d) = (config.vocab_size, config.region_dim);
        let (h, e) = (config.cavp.hidden_size, config.cavp.embed_size);
        let embed = store.add_uniform("W_e", v, e, rng)?;
        let cavp = Cavp::register(store, "cavp", config.cavp, d, rng)?;
        let lp = LstmWeights::register(store, "lp.lstm", h + d, h, rng)?;
        let w_y = store.add_uniform("W_y", v, h, rng)?;
        let b_y = store.add_zeros("b_y", &[v])?;
        Ok(Self {
            config,
            embed,
            cavp,
            lp,
            w_y,
            b_y,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn init_state<T: Scalar>(&self, g: &mut Graph<'_, T>) -> SentenceState {
        let h = self.config.cavp.hidden_size;
        SentenceState {
            lp: Recurrent::zeros(g, h),
            cavp: CavpRecurrent::zeros(g, h),
            pool: Vec::new(),
        }
    }

    /// `h^l_t = LSTM([h^s_t; v_t], h^l_{t-1})`, then word log-probabilities
    /// from `W_y h^l_t + b_y`.
    pub fn lp_step<T: Scalar>(&self, g: &mut Graph<'_, T>, h_single: Var, v: Var, prev: Recurrent) -> Result<(Var, Recurrent)> {
        let x = g.concat(&[h_single, v]);
        let (h, c) = g.lstm_cell(&self.lp, x, prev.h, prev.c)?;
        let logits = g.affine(self.w_y, h, Some(self.b_y))?;
        Ok((word_log_probs(g, logits)?, Recurrent { h, c }))
    }

    pub fn decoder<'m, T: Scalar>(&'m self, g: &mut Graph<'_, T>, rf: &RegionFeatureSet<T>) -> SentenceDecoder<'m> {
        SentenceDecoder {
            model: self,
            regions: rf.to_graph(g),
        }
    }

    /// `Σ_t log π(y_t | y_{<t})` under teacher forcing.
    pub fn sequence_logprob<T: Scalar>(&self, store: &ParamStore<T>, rf: &RegionFeatureSet<T>, y: &TokenSequence) -> Result<f64> {
        let mut g = Graph::new(store);
        let dec = self.decoder(&mut g, rf);
        let init = self.init_state(&mut g);
        let d = decode::teacher_forced(&mut g, &dec, init, y.ids())?;
        Ok(d.log_prob(&g))
    }

    pub fn decode_greedy<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        rf: &RegionFeatureSet<T>,
        max_len: usize,
        vocab: Option<&Vocabulary>,
    ) -> Result<(TokenSequence, f64, AttentionTrace)> {
        let mut g = Graph::new(store);
        let dec = self.decoder(&mut g, rf);
        let init = self.init_state(&mut g);
        let d = decode::greedy(&mut g, &dec, init, max_len)?;
        let tr = trace(&g, &d.cavp, &d.ids, vocab);
        Ok((TokenSequence::generated(d.ids.clone()), d.log_prob(&g), tr))
    }

    /// Sampled sequence and the log-probability of each sampled token.
    pub fn decode_sample<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        rf: &RegionFeatureSet<T>,
        max_len: usize,
        seed: u64,
    ) -> Result<(TokenSequence, Vec<f64>)> {
        let mut g = Graph::new(store);
        let dec = self.decoder(&mut g, rf);
        let init = self.init_state(&mut g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d: Decoded<_> = decode::sample(&mut g, &dec, init, max_len, &mut rng)?;
        let lps = d.token_log_probs.iter().map(|&v| g.scalar(v).as_f64()).collect();
        Ok((TokenSequence::generated(d.ids), lps))
    }

    /// Best hypothesis and its summed log-probability.
    pub fn decode_beam<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        rf: &RegionFeatureSet<T>,
        beam_size: usize,
        max_len: usize,
    ) -> Result<(TokenSequence, f64)> {
        let mut g = Graph::new(store);
        let dec = self.decoder(&mut g, rf);
        let init = self.init_state(&mut g);
        let b = decode::beam(&mut g, &dec, init, beam_size, max_len)?;
        Ok((TokenSequence::generated(b.ids), b.log_prob))
    }
}

/// A sentence model bound to one image's regions on a graph.
pub struct SentenceDecoder<'m> {
    pub model: &'m SentenceModel,
    pub regions: RegionInputs,
}

impl<T: Scalar> StepDecoder<T> for SentenceDecoder<'_> {
    type State = SentenceState;

    fn vocab_size(&self) -> usize {
        self.model.config.vocab_size
    }

    fn step(&self, g: &mut Graph<'_, T>, state: &SentenceState, prev: usize) -> Result<StepOutput<SentenceState>> {
        let m = self.model;
        let emb = g.embedding(m.embed, prev)?;
        let ps = PolicyState::new(g, state.lp.h, self.regions.mean, emb);
        let out = m.cavp.step(g, &ps, &self.regions, &state.pool, &state.cavp)?;
        let (log_probs, lp) = m.lp_step(g, out.single_hidden, out.v, state.lp)?;
        let mut pool = state.pool.clone();
        pool.push(out.v);
        Ok(StepOutput {
            log_probs,
            state: SentenceState {
                lp,
                cavp: out.recurrent,
                pool,
            },
            cavp: out,
        })
    }
}
