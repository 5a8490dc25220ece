//! Self-critical sequence training: the greedy decode's reward baselines the
//! sampled decode's reward, and the surrogate `−A · log π(y^s)` is
//! differentiated.

use std::time::Instant;

use cavp_metrics::{reward, IdfTable, RewardSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cavp::RegionFeatureSet;
use crate::language::decode;
use crate::language::paragraph::{GraphSentence, Strategy};
use crate::language::{flatten, ParagraphModel, SentenceModel, TokenSequence};
use crate::substrate::{Gradients, Graph, ParamStore, Var};
use crate::training::loss::negative_sum;
use crate::{Error, Result, Scalar};

/// Diagnostics of one optimization step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StepReport {
    pub loss: f64,
    pub reward_sample: f64,
    pub reward_greedy: f64,
    pub grad_norm: f64,
    pub tokens_per_sec: f64,
}

/// Where paragraph rewards are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScstLevel {
    /// One advantage for the whole flattened paragraph.
    #[default]
    Paragraph,
    /// One advantage per sentence, each rolled out after the ground-truth
    /// prefix of earlier sentences.
    Sentence,
}

/// Gradient of one self-critical step and what produced it.
#[derive(Debug, Clone)]
pub struct ScstOutcome<T> {
    pub grads: Gradients<T>,
    pub report: StepReport,
    /// Sampled id lists: one per sentence, or a single flat list.
    pub samples: Vec<Vec<usize>>,
    /// Advantage applied to each entry of `samples`.
    pub advantages: Vec<f64>,
}

fn score(cand: &[usize], refs: &[Vec<usize>], spec: &RewardSpec, idf: Option<&IdfTable<usize>>) -> Result<f64> {
    Ok(reward(cand, refs, spec, idf)?)
}

fn content(ids: &[usize]) -> Vec<usize> {
    TokenSequence::generated(ids.to_vec()).content().to_vec()
}

/// Builds `−Σ_j A_j Σ log π(sample_j)` and backpropagates it. All-zero
/// advantages short-circuit to exactly zero gradients.
fn surrogate<T: Scalar>(
    g: &mut Graph<'_, T>,
    num_params: usize,
    groups: &[(f64, Vec<Var>)],
) -> Result<(f64, Gradients<T>)> {
    if groups.iter().all(|(a, lps)| *a == 0.0 || lps.is_empty()) {
        return Ok((0.0, Gradients::empty(num_params)));
    }
    let mut terms = Vec::new();
    for (a, lps) in groups {
        if *a == 0.0 || lps.is_empty() {
            continue;
        }
        let nll = negative_sum(g, lps)?;
        terms.push(g.scale(nll, T::of(*a)));
    }
    let loss = g.sum(&terms)?;
    let value = g.scalar(loss).as_f64();
    Ok((value, g.backward(loss)?))
}

fn rate(tokens: usize, start: Instant) -> f64 {
    let secs = start.elapsed().as_secs_f64();
    if secs > 0.0 {
        tokens as f64 / secs
    } else {
        0.0
    }
}

/// One self-critical step for a single-sentence model.
#[allow(clippy::too_many_arguments)]
pub fn scst_step<T: Scalar>(
    model: &SentenceModel,
    store: &ParamStore<T>,
    rf: &RegionFeatureSet<T>,
    references: &[Vec<usize>],
    spec: &RewardSpec,
    idf: Option<&IdfTable<usize>>,
    max_len: usize,
    seed: u64,
) -> Result<ScstOutcome<T>> {
    if references.is_empty() {
        return Err(Error::Data("self-critical step needs at least one reference".into()));
    }
    let start = Instant::now();
    let greedy_ids = {
        let mut g = Graph::new(store);
        let dec = model.decoder(&mut g, rf);
        let init = model.init_state(&mut g);
        decode::greedy(&mut g, &dec, init, max_len)?.ids
    };
    let mut g = Graph::new(store);
    let dec = model.decoder(&mut g, rf);
    let init = model.init_state(&mut g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampled = decode::sample(&mut g, &dec, init, max_len, &mut rng)?;
    let r_s = score(&content(&sampled.ids), references, spec, idf)?;
    let r_g = score(&content(&greedy_ids), references, spec, idf)?;
    let a = r_s - r_g;
    let tokens = sampled.ids.len() + greedy_ids.len();
    let (loss, grads) = surrogate(&mut g, store.len(), &[(a, sampled.token_log_probs.clone())])?;
    Ok(ScstOutcome {
        report: StepReport {
            loss,
            reward_sample: r_s,
            reward_greedy: r_g,
            grad_norm: grads.norm().as_f64(),
            tokens_per_sec: rate(tokens, start),
        },
        grads,
        samples: vec![sampled.ids],
        advantages: vec![a],
    })
}

fn paragraph_ids(sents: &[GraphSentence]) -> Vec<usize> {
    sents.iter().flat_map(|s| content(&s.ids)).collect()
}

/// One self-critical step for the paragraph model. `references` holds
/// ground-truth paragraphs as sentence lists.
#[allow(clippy::too_many_arguments)]
pub fn paragraph_scst_step<T: Scalar>(
    model: &ParagraphModel,
    store: &ParamStore<T>,
    rf: &RegionFeatureSet<T>,
    references: &[Vec<TokenSequence>],
    spec: &RewardSpec,
    idf: Option<&IdfTable<usize>>,
    level: ScstLevel,
    max_sentences: usize,
    max_words: usize,
    seed: u64,
) -> Result<ScstOutcome<T>> {
    let references: Vec<&Vec<TokenSequence>> = references.iter().filter(|p| !p.is_empty()).collect();
    if references.is_empty() {
        return Err(Error::Data("self-critical step needs a ground-truth paragraph".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match level {
        ScstLevel::Paragraph => {
            let flat_refs: Vec<Vec<usize>> = references.iter().map(|p| flatten(p)).collect();
            let greedy = {
                let mut g = Graph::new(store);
                let regions = rf.to_graph(&mut g);
                let s = model.generate::<T, ChaCha8Rng>(&mut g, &regions, max_sentences, max_words, Strategy::Greedy)?;
                paragraph_ids(&s)
            };
            let mut g = Graph::new(store);
            let regions = rf.to_graph(&mut g);
            let sampled = model.generate(&mut g, &regions, max_sentences, max_words, Strategy::Sample(&mut rng))?;
            let sample_ids = paragraph_ids(&sampled);
            let r_s = score(&sample_ids, &flat_refs, spec, idf)?;
            let r_g = score(&greedy, &flat_refs, spec, idf)?;
            let a = r_s - r_g;
            let lps: Vec<Var> = sampled.iter().flat_map(|s| s.token_log_probs.iter().copied()).collect();
            let tokens = lps.len() + greedy.len();
            let (loss, grads) = surrogate(&mut g, store.len(), &[(a, lps)])?;
            Ok(ScstOutcome {
                report: StepReport {
                    loss,
                    reward_sample: r_s,
                    reward_greedy: r_g,
                    grad_norm: grads.norm().as_f64(),
                    tokens_per_sec: rate(tokens, start),
                },
                grads,
                samples: sampled.iter().map(|s| s.ids.clone()).collect(),
                advantages: vec![a],
            })
        }
        ScstLevel::Sentence => {
            let n = references[0].len();
            // Greedy rollouts run on their own graph with independent buffers.
            let mut gg = Graph::new(store);
            let g_regions = rf.to_graph(&mut gg);
            let mut g_state = model.init_state(&mut gg);
            let mut g = Graph::new(store);
            let regions = rf.to_graph(&mut g);
            let mut state = model.init_state(&mut g);
            let mut groups = Vec::with_capacity(n);
            let mut samples = Vec::with_capacity(n);
            let mut advantages = Vec::with_capacity(n);
            let (mut sum_s, mut sum_g, mut tokens) = (0.0, 0.0, 0);
            for i in 0..n {
                let refs_i: Vec<Vec<usize>> = references
                    .iter()
                    .filter_map(|p| p.get(i))
                    .map(|s| s.content().to_vec())
                    .collect();

                let g_prior = g_state.pool.clone();
                let (_, g_lp, g_next) = model.sentence_step(&mut gg, &g_regions, &g_state)?;
                let g_dec = model.word_decoder(&g_regions, g_lp.topic, &g_prior);
                let g_init = model.init_word_state(&mut gg);
                let greedy = decode::greedy(&mut gg, &g_dec, g_init, max_words)?;
                g_state = g_next;

                let prior = state.pool.clone();
                let (_, lp, next) = model.sentence_step(&mut g, &regions, &state)?;
                let dec = model.word_decoder(&regions, lp.topic, &prior);
                let init = model.init_word_state(&mut g);
                let sampled = decode::sample(&mut g, &dec, init, max_words, &mut rng)?;
                state = next;

                let r_s = score(&content(&sampled.ids), &refs_i, spec, idf)?;
                let r_g = score(&content(&greedy.ids), &refs_i, spec, idf)?;
                sum_s += r_s;
                sum_g += r_g;
                tokens += sampled.ids.len() + greedy.ids.len();
                advantages.push(r_s - r_g);
                groups.push((r_s - r_g, sampled.token_log_probs.clone()));
                samples.push(sampled.ids);
            }
            let (loss, grads) = surrogate(&mut g, store.len(), &groups)?;
            Ok(ScstOutcome {
                report: StepReport {
                    loss,
                    reward_sample: sum_s / n as f64,
                    reward_greedy: sum_g / n as f64,
                    grad_norm: grads.norm().as_f64(),
                    tokens_per_sec: rate(tokens, start),
                },
                grads,
                samples,
                advantages,
            })
        }
    }
}
