//! Two-phase training loop: cross-entropy pre-training, then self-critical
//! fine-tuning.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use cavp_metrics::{corpus_bleu, corpus_cider_d, IdfTable, Metric, RewardSpec, DEFAULT_SIGMA};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Map;

use crate::data::{Dataset, Example, Target};
use crate::language::paragraph::Strategy;
use crate::language::{Mode, ModelConfig};
use crate::model::{CaptionModel, Network};
use crate::substrate::{Gradients, Graph};
use crate::training::loss::{paragraph_xe_loss, xe_loss, Cloning, Expert};
use crate::training::optim::{Adam, LrSchedule};
use crate::training::scst::{paragraph_scst_step, scst_step, ScstLevel};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "XE")]
    Xe,
    #[serde(rename = "RL")]
    Rl,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Xe => "XE",
            Phase::Rl => "RL",
        })
    }
}

/// Epoch budget and learning-rate schedule of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub epochs: usize,
    pub lr: LrSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub xe: PhaseConfig,
    pub rl: PhaseConfig,
    pub batch_size: usize,
    /// Metric name, e.g. `cider`, `bleu-4`, `rouge-l`.
    pub reward: String,
    pub scst_level: ScstLevel,
    pub lambda_w: f64,
    pub lambda_s: f64,
    pub behavior_cloning: bool,
    /// Weight `μ` of the cloning KL term.
    pub cloning_weight: f64,
    pub clip_norm: f64,
    pub seed: u64,
    pub max_len: usize,
    pub max_sentences: usize,
    /// Write a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Compute training CIDEr-D every this many epochs; 0 disables it.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            xe: PhaseConfig {
                epochs: 37,
                lr: LrSchedule {
                    base: 5e-4,
                    decay: 0.8,
                    every: 3,
                },
            },
            rl: PhaseConfig {
                epochs: 10,
                lr: LrSchedule {
                    base: 5e-5,
                    decay: 0.1,
                    every: 55,
                },
            },
            batch_size: 10,
            reward: "cider".into(),
            scst_level: ScstLevel::Paragraph,
            lambda_w: 1.0,
            lambda_s: 5.0,
            behavior_cloning: true,
            cloning_weight: 1.0,
            clip_norm: 10.0,
            seed: 0,
            max_len: 16,
            max_sentences: 6,
            checkpoint_every: 0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.xe.lr.validate()?;
        self.rl.lr.validate()?;
        self.reward_spec()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lambda_w >= 0.0 && self.lambda_s >= 0.0) {
            return Err(Error::Config("lambda_w and lambda_s must be non-negative".into()));
        }
        if self.cloning_weight.is_nan() || self.cloning_weight < 0.0 {
            return Err(Error::Config("cloning_weight must be non-negative".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if self.max_len == 0 || self.max_sentences == 0 {
            return Err(Error::Config("max_len and max_sentences must be at least 1".into()));
        }
        Ok(())
    }

    pub fn reward_spec(&self) -> Result<RewardSpec> {
        self.reward
            .parse()
            .map_err(|_| Error::Config(format!("unknown reward metric {:?}", self.reward)))
    }
}

/// Aggregates of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochReport {
    /// One-based epoch counter across both phases.
    pub epoch: usize,
    pub phase: Phase,
    pub lr: f64,
    pub mean_loss: f64,
    pub mean_reward_sample: Option<f64>,
    pub mean_reward_greedy: Option<f64>,
    pub train_cider: Option<f64>,
    pub mean_grad_norm: f64,
    pub tokens_per_sec: f64,
}

/// Row of the metrics CSV.
#[derive(Debug, Serialize)]
struct CsvRow {
    epoch: usize,
    phase: Phase,
    mean_loss: f64,
    mean_reward_sample: Option<f64>,
    mean_reward_greedy: Option<f64>,
    #[serde(rename = "train_CIDEr")]
    train_cider: Option<f64>,
}

/// Corpus scores of greedy decodes on a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores {
    pub cider_d: f64,
    pub bleu4: f64,
}

/// Greedy decode of one example as a flat id list.
pub fn greedy_caption<T: Scalar>(model: &CaptionModel<T>, ex: &Example<T>, max_len: usize, max_sentences: usize) -> Result<Vec<usize>> {
    match &model.net {
        Network::Sentence(m) => {
            let (seq, _, _) = m.decode_greedy(&model.store, &ex.regions, max_len, None)?;
            Ok(seq.content().to_vec())
        }
        Network::Paragraph(m) => {
            let p = m.decode_paragraph::<T, ChaCha8Rng>(&model.store, &ex.regions, max_sentences, max_len, Strategy::Greedy, None)?;
            Ok(crate::language::flatten(&p.sentences))
        }
    }
}

/// CIDEr-D and BLEU-4 of greedy decodes against each example's references.
pub fn evaluate<T: Scalar>(
    model: &CaptionModel<T>,
    data: &Dataset<T>,
    idf: &IdfTable<usize>,
    max_len: usize,
    max_sentences: usize,
) -> Result<Scores> {
    let mut pairs = Vec::with_capacity(data.len());
    for ex in &data.examples {
        pairs.push((greedy_caption(model, ex, max_len, max_sentences)?, ex.target.reference_ids()));
    }
    Ok(Scores {
        cider_d: corpus_cider_d(&pairs, idf, DEFAULT_SIGMA)?,
        bleu4: corpus_bleu(&pairs, 4)?,
    })
}

fn check_mode<T: Scalar>(config: &ModelConfig, data: &Dataset<T>) -> Result<()> {
    for ex in &data.examples {
        let ok = matches!(
            (config.mode, &ex.target),
            (Mode::Sentence, Target::Captions(_)) | (Mode::Paragraph, Target::Paragraph(_))
        );
        if !ok {
            return Err(Error::Data(format!("example {} does not match the model mode", ex.image_id)));
        }
        if ex.regions.dim() != config.region_dim {
            return Err(Error::Data(format!(
                "example {} has region dimension {}, model expects {}",
                ex.image_id,
                ex.regions.dim(),
                config.region_dim
            )));
        }
    }
    if data.vocab.len() != config.vocab_size {
        return Err(Error::Data(format!(
            "vocabulary has {} ids, model expects {}",
            data.vocab.len(),
            config.vocab_size
        )));
    }
    Ok(())
}

/// Loss value, gradients and token count of one teacher-forced item.
pub fn xe_item<T: Scalar>(
    model: &CaptionModel<T>,
    ex: &Example<T>,
    caption: usize,
    cfg: &TrainConfig,
    expert: Option<&Expert>,
) -> Result<(f64, Gradients<T>, usize)> {
    let bc = expert.map(|e| Cloning {
        expert: e,
        mu: cfg.cloning_weight,
    });
    let mut g = Graph::new(&model.store);
    let regions = ex.regions.to_graph(&mut g);
    let (loss, tokens) = match (&model.net, &ex.target) {
        (Network::Sentence(m), Target::Captions(c)) => {
            let (loss, d) = xe_loss(&mut g, m, &regions, &c[caption], bc)?;
            (loss, d.ids.len())
        }
        (Network::Paragraph(m), Target::Paragraph(p)) => {
            let (loss, s) = paragraph_xe_loss(&mut g, m, &regions, p, cfg.lambda_w, cfg.lambda_s, bc)?;
            (loss, s.iter().map(|s| s.ids.len()).sum())
        }
        _ => return Err(Error::Data(format!("example {} does not match the model mode", ex.image_id))),
    };
    let value = g.scalar(loss).as_f64();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss on {}", ex.image_id)));
    }
    Ok((value, g.backward(loss)?, tokens))
}

/// Runs both phases and calls `on_epoch` after every epoch.
pub fn train<T: Scalar>(
    model: &mut CaptionModel<T>,
    data: &Dataset<T>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochReport, &CaptionModel<T>) -> Result<()>,
) -> Result<Vec<EpochReport>> {
    cfg.validate()?;
    check_mode(&model.config, data)?;
    let spec = cfg.reward_spec()?;
    let idf = data.idf();
    let reward_idf = spec.metric.needs_idf().then_some(&idf);
    let expert = (cfg.behavior_cloning && cfg.cloning_weight > 0.0).then(|| Expert::from_vocab(&data.vocab));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut reports = Vec::new();

    let xe_items: Vec<(usize, usize)> = data
        .examples
        .iter()
        .enumerate()
        .flat_map(|(i, ex)| {
            let n = match &ex.target {
                Target::Captions(c) => c.len(),
                Target::Paragraph(_) => 1,
            };
            (0..n).map(move |c| (i, c))
        })
        .collect();
    let rl_items: Vec<(usize, usize)> = (0..data.len()).map(|i| (i, 0)).collect();

    for phase in [Phase::Xe, Phase::Rl] {
        let pc = match phase {
            Phase::Xe => cfg.xe,
            Phase::Rl => cfg.rl,
        };
        let mut adam = Adam::new(&model.store);
        let mut items = match phase {
            Phase::Xe => xe_items.clone(),
            Phase::Rl => rl_items.clone(),
        };
        for e in 0..pc.epochs {
            let lr = pc.lr.rate(e);
            let start = Instant::now();
            items.shuffle(&mut rng);
            let (mut loss_sum, mut rs_sum, mut rg_sum, mut norm_sum) = (0.0, 0.0, 0.0, 0.0);
            let mut tokens = 0usize;
            let mut batches = 0usize;
            for batch in items.chunks(cfg.batch_size) {
                model.store.zero_grad();
                let scale = T::of(1.0 / batch.len() as f64);
                for &(i, c) in batch {
                    let ex = &data.examples[i];
                    let grads = match phase {
                        Phase::Xe => {
                            let (l, grads, t) = xe_item(model, ex, c, cfg, expert.as_ref())?;
                            loss_sum += l;
                            tokens += t;
                            grads
                        }
                        Phase::Rl => {
                            let seed = rng.gen::<u64>();
                            let out = match (&model.net, &ex.target) {
                                (Network::Sentence(m), Target::Captions(_)) => scst_step(
                                    m,
                                    &model.store,
                                    &ex.regions,
                                    &ex.target.reference_ids(),
                                    &spec,
                                    reward_idf,
                                    cfg.max_len,
                                    seed,
                                )?,
                                (Network::Paragraph(m), Target::Paragraph(p)) => paragraph_scst_step(
                                    m,
                                    &model.store,
                                    &ex.regions,
                                    std::slice::from_ref(p),
                                    &spec,
                                    reward_idf,
                                    cfg.scst_level,
                                    cfg.max_sentences,
                                    cfg.max_len,
                                    seed,
                                )?,
                                _ => return Err(Error::Data(format!("example {} does not match the model mode", ex.image_id))),
                            };
                            if !out.report.loss.is_finite() {
                                return Err(Error::NonFinite(format!("loss on {}", ex.image_id)));
                            }
                            loss_sum += out.report.loss;
                            rs_sum += out.report.reward_sample;
                            rg_sum += out.report.reward_greedy;
                            tokens += out.samples.iter().map(Vec::len).sum::<usize>();
                            out.grads
                        }
                    };
                    model.store.accumulate(&grads, scale);
                }
                norm_sum += model.store.clip_grad_norm(T::of(cfg.clip_norm)).as_f64();
                batches += 1;
                // A zero self-critical gradient must leave parameters untouched,
                // which Adam's momentum would otherwise violate.
                if phase == Phase::Rl && model.store.grads_are_zero() {
                    continue;
                }
                adam.step(&mut model.store, lr)?;
            }
            let n = items.len().max(1) as f64;
            let epoch = reports.len() + 1;
            let train_cider = if cfg.eval_every > 0 && epoch % cfg.eval_every == 0 {
                Some(evaluate(model, data, &idf, cfg.max_len, cfg.max_sentences)?.cider_d)
            } else {
                None
            };
            let secs = start.elapsed().as_secs_f64();
            let report = EpochReport {
                epoch,
                phase,
                lr,
                mean_loss: loss_sum / n,
                mean_reward_sample: (phase == Phase::Rl).then_some(rs_sum / n),
                mean_reward_greedy: (phase == Phase::Rl).then_some(rg_sum / n),
                train_cider,
                mean_grad_norm: norm_sum / batches.max(1) as f64,
                tokens_per_sec: if secs > 0.0 { tokens as f64 / secs } else { 0.0 },
            };
            on_epoch(&report, model)?;
            reports.push(report);
        }
    }
    Ok(reports)
}

/// Trains and writes `metrics.csv`, periodic `epoch_NNNN.ckpt` files and
/// `final.ckpt` into `out_dir`.
pub fn train_to_dir<T: Scalar>(
    model: &mut CaptionModel<T>,
    data: &Dataset<T>,
    cfg: &TrainConfig,
    out_dir: &Path,
    mut progress: impl FnMut(&EpochReport),
) -> Result<Vec<EpochReport>> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut csv = csv::Writer::from_path(out_dir.join("metrics.csv")).map_err(csv_err)?;
    let mut extra = Map::new();
    extra.insert("train_config".into(), serde_json::to_value(cfg)?);
    let reports = train(model, data, cfg, |r, m| {
        csv.serialize(CsvRow {
            epoch: r.epoch,
            phase: r.phase,
            mean_loss: r.mean_loss,
            mean_reward_sample: r.mean_reward_sample,
            mean_reward_greedy: r.mean_reward_greedy,
            train_cider: r.train_cider,
        })
        .map_err(csv_err)?;
        csv.flush()?;
        if cfg.checkpoint_every > 0 && r.epoch % cfg.checkpoint_every == 0 {
            m.save(&out_dir.join(format!("epoch_{:04}.ckpt", r.epoch)), &data.vocab, extra.clone())?;
        }
        progress(r);
        Ok(())
    })?;
    if reports.is_empty() {
        csv.write_record(["epoch", "phase", "mean_loss", "mean_reward_sample", "mean_reward_greedy", "train_CIDEr"])
            .map_err(csv_err)?;
    }
    csv.flush()?;
    model.save(&out_dir.join("final.ckpt"), &data.vocab, extra)?;
    Ok(reports)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Metric to use as reward by default for a mode.
pub fn default_reward(mode: Mode) -> Metric {
    match mode {
        Mode::Sentence => Metric::CiderD { sigma: DEFAULT_SIGMA },
        Mode::Paragraph => Metric::Bleu(4),
    }
}

/// Teacher-forced cross-entropy of every item, averaged.
pub fn mean_xe<T: Scalar>(model: &CaptionModel<T>, data: &Dataset<T>, cfg: &TrainConfig) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0;
    for ex in &data.examples {
        let count = match &ex.target {
            Target::Captions(c) => c.len(),
            Target::Paragraph(_) => 1,
        };
        for c in 0..count {
            total += xe_item(model, ex, c, &TrainConfig { behavior_cloning: false, ..cfg.clone() }, None)?.0;
            n += 1;
        }
    }
    Ok(total / n.max(1) as f64)
}
