//! Hierarchical paragraph captioner: a sentence-level CAVP and LSTM emit a
//! topic and a stop distribution per sentence; a word-level CAVP and LSTM
//! expand each topic into words.

use rand::Rng;

use crate::attention::{PolicyState, Recurrent};
use crate::cavp::{AttentionTrace, Cavp, CavpOutput, CavpRecurrent, RegionFeatureSet, RegionInputs};
use crate::language::decode::{self, StepDecoder, StepOutput};
use crate::language::{trace, word_log_probs, ModelConfig, TokenSequence, Vocabulary, WordContext};
use crate::substrate::{Graph, LstmWeights, ParamId, ParamStore, Var};
use crate::{Error, Result, Scalar};

pub const CONTINUE: usize = 0;
pub const STOP: usize = 1;

/// Parameter handles of the paragraph model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParagraphModel {
    config: ModelConfig,
    pub embed: ParamId,
    pub sentence_cavp: Cavp,
    pub sentence_lstm: LstmWeights,
    pub w_topic: ParamId,
    pub b_topic: ParamId,
    pub w_stop: ParamId,
    pub b_stop: ParamId,
    pub word_cavp: Cavp,
    pub word_lstm: LstmWeights,
    pub w_y: ParamId,
    pub b_y: ParamId,
}

/// Sentence-level recurrent state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParagraphState {
    pub lstm: Recurrent,
    pub cavp: CavpRecurrent,
    /// Sentence-level visual outputs `{v_1 .. v_{i-1}}`.
    pub pool: Vec<Var>,
}

/// Topic vector and stop distribution of one sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SentenceLpOutput {
    pub topic: Var,
    /// Probabilities over {CONTINUE, STOP}.
    pub stop: Var,
    pub stop_log_probs: Var,
    pub recurrent: Recurrent,
}

/// Word-level recurrent state; reset for every sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordState {
    pub lstm: Recurrent,
    pub cavp: CavpRecurrent,
    pub word_pool: Vec<Var>,
}

/// How words are chosen within each sentence.
pub enum Strategy<'r, R> {
    Greedy,
    Sample(&'r mut R),
    Beam(usize),
}

/// One generated or teacher-forced sentence on a graph.
#[derive(Debug, Clone)]
pub struct GraphSentence {
    pub ids: Vec<usize>,
    /// Per-token log-probability nodes; empty for beam search.
    pub token_log_probs: Vec<Var>,
    pub word_cavp: Vec<CavpOutput>,
    pub sentence_cavp: CavpOutput,
    pub lp: SentenceLpOutput,
}

/// Decoded paragraph with plain values.
#[derive(Debug, Clone, PartialEq)]
pub struct ParagraphDecode {
    pub sentences: Vec<TokenSequence>,
    /// `[p(CONTINUE), p(STOP)]` per sentence.
    pub stop_probs: Vec<[f64; 2]>,
    pub log_prob: f64,
    pub traces: Vec<AttentionTrace>,
}

impl ParagraphModel {
    pub fn register<T: Scalar, R: Rng>(store: &mut ParamStore<T>, config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (v, d) = (config.vocab_size, config.region_dim);
        let (h, e) = (config.cavp.hidden_size, config.cavp.embed_size);
        Ok(Self {
            config,
            embed: store.add_uniform("W_e", v, e, rng)?,
            sentence_cavp: Cavp::register(store, "sentence.cavp", config.cavp, d, rng)?,
            sentence_lstm: LstmWeights::register(store, "sentence.lstm", d, h, rng)?,
            w_topic: store.add_uniform("W_topic", h, h, rng)?,
            b_topic: store.add_zeros("b_topic", &[h])?,
            w_stop: store.add_uniform("W_stop", 2, h, rng)?,
            b_stop: store.add_zeros("b_stop", &[2])?,
            word_cavp: Cavp::register(store, "word.cavp", config.cavp, d, rng)?,
            word_lstm: LstmWeights::register(store, "word.lstm", h + e, h, rng)?,
            w_y: store.add_uniform("W_y", v, h + d, rng)?,
            b_y: store.add_zeros("b_y", &[v])?,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn init_state<T: Scalar>(&self, g: &mut Graph<'_, T>) -> ParagraphState {
        let h = self.config.cavp.hidden_size;
        ParagraphState {
            lstm: Recurrent::zeros(g, h),
            cavp: CavpRecurrent::zeros(g, h),
            pool: Vec::new(),
        }
    }

    /// Topic and stop distribution from the sentence LSTM fed with `v_i`.
    pub fn sentence_lp_step<T: Scalar>(&self, g: &mut Graph<'_, T>, v: Var, prev: Recurrent) -> Result<SentenceLpOutput> {
        let (h, c) = g.lstm_cell(&self.sentence_lstm, v, prev.h, prev.c)?;
        let topic = g.affine(self.w_topic, h, Some(self.b_topic))?;
        let logits = g.affine(self.w_stop, h, Some(self.b_stop))?;
        Ok(SentenceLpOutput {
            topic,
            stop: g.softmax(logits)?,
            stop_log_probs: g.log_softmax(logits)?,
            recurrent: Recurrent { h, c },
        })
    }

    /// Sentence-level CAVP over the previous sentence outputs, then the
    /// sentence LP. Returns the new state with `v_i` appended to the pool.
    pub fn sentence_step<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        regions: &RegionInputs,
        state: &ParagraphState,
    ) -> Result<(CavpOutput, SentenceLpOutput, ParagraphState)> {
        let no_word = g.zeros(self.config.cavp.embed_size);
        let ps = PolicyState::new(g, state.lstm.h, regions.mean, no_word);
        let out = self.sentence_cavp.step(g, &ps, regions, &state.pool, &state.cavp)?;
        let lp = self.sentence_lp_step(g, out.v, state.lstm)?;
        let mut pool = state.pool.clone();
        pool.push(out.v);
        let next = ParagraphState {
            lstm: lp.recurrent,
            cavp: out.recurrent,
            pool,
        };
        Ok((out, lp, next))
    }

    pub fn word_decoder<'m>(&'m self, regions: &RegionInputs, topic: Var, sentence_pool: &[Var]) -> WordDecoder<'m> {
        WordDecoder {
            model: self,
            regions: regions.clone(),
            topic,
            sentence_pool: sentence_pool.to_vec(),
        }
    }

    pub fn init_word_state<T: Scalar>(&self, g: &mut Graph<'_, T>) -> WordState {
        let h = self.config.cavp.hidden_size;
        WordState {
            lstm: Recurrent::zeros(g, h),
            cavp: CavpRecurrent::zeros(g, h),
            word_pool: Vec::new(),
        }
    }

    /// Runs the sentence level over `sentences` and teacher-forces each one.
    pub fn teacher_forced<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        regions: &RegionInputs,
        sentences: &[TokenSequence],
    ) -> Result<Vec<GraphSentence>> {
        if sentences.is_empty() {
            return Err(Error::Data("empty paragraph".into()));
        }
        let mut state = self.init_state(g);
        let mut out = Vec::with_capacity(sentences.len());
        for s in sentences {
            let prior_pool = state.pool.clone();
            let (sc, lp, next) = self.sentence_step(g, regions, &state)?;
            let dec = self.word_decoder(regions, lp.topic, &prior_pool);
            let init = self.init_word_state(g);
            let d = decode::teacher_forced(g, &dec, init, s.ids())?;
            out.push(GraphSentence {
                ids: d.ids,
                token_log_probs: d.token_log_probs,
                word_cavp: d.cavp,
                sentence_cavp: sc,
                lp,
            });
            state = next;
        }
        Ok(out)
    }

    /// Generates sentences until `p(STOP) > 0.5` or `max_sentences`.
    pub fn generate<T: Scalar, R: Rng>(
        &self,
        g: &mut Graph<'_, T>,
        regions: &RegionInputs,
        max_sentences: usize,
        max_words: usize,
        mut strategy: Strategy<'_, R>,
    ) -> Result<Vec<GraphSentence>> {
        if max_sentences == 0 {
            return Err(Error::Config("max_sentences must be at least 1".into()));
        }
        let mut state = self.init_state(g);
        let mut out = Vec::new();
        while out.len() < max_sentences {
            let prior_pool = state.pool.clone();
            let (sc, lp, next) = self.sentence_step(g, regions, &state)?;
            let dec = self.word_decoder(regions, lp.topic, &prior_pool);
            let init = self.init_word_state(g);
            let (ids, token_log_probs, word_cavp) = match &mut strategy {
                Strategy::Greedy => {
                    let d = decode::greedy(g, &dec, init, max_words)?;
                    (d.ids, d.token_log_probs, d.cavp)
                }
                Strategy::Sample(rng) => {
                    let d = decode::sample(g, &dec, init, max_words, *rng)?;
                    (d.ids, d.token_log_probs, d.cavp)
                }
                Strategy::Beam(size) => {
                    let b = decode::beam(g, &dec, init, *size, max_words)?;
                    (b.ids, Vec::new(), Vec::new())
                }
            };
            let p_stop = g.value(lp.stop)[STOP].as_f64();
            out.push(GraphSentence {
                ids,
                token_log_probs,
                word_cavp,
                sentence_cavp: sc,
                lp,
            });
            state = next;
            if p_stop > 0.5 {
                break;
            }
        }
        Ok(out)
    }

    /// Generates a paragraph on a fresh graph and reads out plain values.
    pub fn decode_paragraph<T: Scalar, R: Rng>(
        &self,
        store: &ParamStore<T>,
        rf: &RegionFeatureSet<T>,
        max_sentences: usize,
        max_words: usize,
        strategy: Strategy<'_, R>,
        vocab: Option<&Vocabulary>,
    ) -> Result<ParagraphDecode> {
        let mut g = Graph::new(store);
        let regions = rf.to_graph(&mut g);
        let sents = self.generate(&mut g, &regions, max_sentences, max_words, strategy)?;
        let mut out = ParagraphDecode {
            sentences: Vec::new(),
            stop_probs: Vec::new(),
            log_prob: 0.0,
            traces: Vec::new(),
        };
        for s in sents {
            let p = g.value(s.lp.stop);
            out.stop_probs.push([p[CONTINUE].as_f64(), p[STOP].as_f64()]);
            out.log_prob += s.token_log_probs.iter().map(|&v| g.scalar(v).as_f64()).sum::<f64>();
            out.traces.push(trace(&g, &s.word_cavp, &s.ids, vocab));
            out.sentences.push(TokenSequence::generated(s.ids));
        }
        Ok(out)
    }
}

/// Word-level decoder for one sentence of a paragraph.
pub struct WordDecoder<'m> {
    pub model: &'m ParagraphModel,
    pub regions: RegionInputs,
    pub topic: Var,
    pub sentence_pool: Vec<Var>,
}

impl<T: Scalar> StepDecoder<T> for WordDecoder<'_> {
    type State = WordState;

    fn vocab_size(&self) -> usize {
        self.model.config.vocab_size
    }

    fn step(&self, g: &mut Graph<'_, T>, state: &WordState, prev: usize) -> Result<StepOutput<WordState>> {
        let m = self.model;
        let emb = g.embedding(m.embed, prev)?;
        let ps = PolicyState::new(g, state.lstm.h, self.regions.mean, emb);
        let pool = match m.config.word_context {
            WordContext::SentenceOutputs => &self.sentence_pool,
            WordContext::PreviousWords => &state.word_pool,
        };
        let out = m.word_cavp.step(g, &ps, &self.regions, pool, &state.cavp)?;
        let x = g.concat(&[self.topic, emb]);
        let (h, c) = g.lstm_cell(&m.word_lstm, x, state.lstm.h, state.lstm.c)?;
        let readout = g.concat(&[h, out.v]);
        let logits = g.affine(m.w_y, readout, Some(m.b_y))?;
        let log_probs = word_log_probs(g, logits)?;
        let mut word_pool = state.word_pool.clone();
        word_pool.push(out.v);
        Ok(StepOutput {
            log_probs,
            state: WordState {
                lstm: Recurrent { h, c },
                cavp: out.recurrent,
                word_pool,
            },
            cavp: out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavp::CavpConfig;
    use crate::language::Mode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(word_context: WordContext) -> (ParamStore<f64>, ParagraphModel, RegionFeatureSet<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = ModelConfig {
            mode: Mode::Paragraph,
            vocab_size: 7,
            region_dim: 4,
            cavp: CavpConfig {
                hidden_size: 5,
                attn_size: 4,
                embed_size: 3,
                ..CavpConfig::desk()
            },
            word_context,
        };
        let mut store = ParamStore::new();
        let m = ParagraphModel::register(&mut store, cfg, &mut rng).unwrap();
        let rf = RegionFeatureSet::new((0..3).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()).unwrap();
        (store, m, rf)
    }

    fn set_stop(store: &mut ParamStore<f64>, m: &ParagraphModel, p_stop: f64) {
        store.value_mut(m.w_stop).fill(0.0);
        let b = store.value_mut(m.b_stop).data_mut();
        b[CONTINUE] = 0.0;
        b[STOP] = (p_stop / (1.0 - p_stop)).ln();
    }

    #[test]
    fn zero_stop_classifier_is_even() {
        let (mut store, m, _) = setup(WordContext::SentenceOutputs);
        store.value_mut(m.w_stop).fill(0.0);
        let mut g = Graph::new(&store);
        let v = g.input(vec![0.3, 0.1, -0.2, 0.5]);
        let r = Recurrent::zeros(&mut g, 5);
        let out = m.sentence_lp_step(&mut g, v, r).unwrap();
        assert_eq!(g.value(out.stop), &[0.5, 0.5]);
        assert_eq!(g.len_of(out.topic), 5);
    }

    #[test]
    fn halting_rule() {
        let (mut store, m, rf) = setup(WordContext::SentenceOutputs);
        set_stop(&mut store, &m, 0.9);
        let p = m.decode_paragraph::<f64, ChaCha8Rng>(&store, &rf, 6, 5, Strategy::Greedy, None).unwrap();
        assert_eq!(p.sentences.len(), 1);
        set_stop(&mut store, &m, 0.1);
        let p = m.decode_paragraph::<f64, ChaCha8Rng>(&store, &rf, 6, 5, Strategy::Greedy, None).unwrap();
        assert_eq!(p.sentences.len(), 6);
        assert!(p.sentences.iter().all(|s| s.len() <= 5));
    }

    #[test]
    fn word_lstm_input_is_topic_plus_embedding() {
        let (_, m, _) = setup(WordContext::SentenceOutputs);
        assert_eq!(m.word_lstm.input_size, 5 + 3);
    }

    #[test]
    fn word_context_pool_is_previous_sentences() {
        let (mut store, m, rf) = setup(WordContext::SentenceOutputs);
        set_stop(&mut store, &m, 0.1);
        let mut g = Graph::new(&store);
        let regions = rf.to_graph(&mut g);
        let sents = m.generate::<f64, ChaCha8Rng>(&mut g, &regions, 3, 6, Strategy::Greedy).unwrap();
        for (i, s) in sents.iter().enumerate() {
            let sc = s.sentence_cavp.context.map(|c| g.len_of(c)).unwrap_or(0);
            assert_eq!(sc, i);
            for w in &s.word_cavp {
                assert_eq!(w.context.map(|c| g.len_of(c)).unwrap_or(0), i);
            }
        }
    }

    #[test]
    fn previous_words_variant_grows_per_word() {
        let (mut store, m, rf) = setup(WordContext::PreviousWords);
        set_stop(&mut store, &m, 0.9);
        store.value_mut(m.w_y).fill(0.0);
        let mut g = Graph::new(&store);
        let regions = rf.to_graph(&mut g);
        let sents = m.generate::<f64, ChaCha8Rng>(&mut g, &regions, 1, 4, Strategy::Greedy).unwrap();
        for (j, w) in sents[0].word_cavp.iter().enumerate() {
            assert_eq!(w.context.map(|c| g.len_of(c)).unwrap_or(0), j);
        }
    }
}
