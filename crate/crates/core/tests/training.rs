mod support;

use cavp_core::cavp::{CavpConfig, CavpVariant, ContextMode, RegionFeatureSet};
use cavp_core::data::{synth_dataset, SynthConfig};
use cavp_core::language::{decode, Mode, ModelConfig, ParagraphModel, SentenceModel, TokenSequence, WordContext};
use cavp_core::model::CaptionModel;
use cavp_core::substrate::{grad_check, GradCheckConfig, Gradients, Graph, ParamStore, Tensor};
use cavp_core::training::{
    paragraph_scst_step, paragraph_xe_loss, scst_step, train, train_to_dir, xe_loss, Adam, Cloning, Expert, LrSchedule, PhaseConfig,
    ScstLevel, TrainConfig,
};
use cavp_metrics::RewardSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{bits, caption, regions, small};

fn phase(epochs: usize, base: f64) -> PhaseConfig {
    PhaseConfig {
        epochs,
        lr: LrSchedule {
            base,
            decay: 1.0,
            every: 1,
        },
    }
}

fn quick_config(xe: usize, rl: usize) -> TrainConfig {
    TrainConfig {
        xe: phase(xe, 5e-3),
        rl: phase(rl, 5e-4),
        batch_size: 4,
        eval_every: 0,
        max_len: 10,
        max_sentences: 4,
        ..TrainConfig::default()
    }
}

fn synth_model(data_cfg: SynthConfig, mode: Mode, seed: u64) -> (CaptionModel<f64>, cavp_core::data::Dataset<f64>) {
    let data = synth_dataset(&data_cfg).unwrap().dataset::<f64>(16).unwrap();
    let cfg = ModelConfig {
        mode,
        vocab_size: data.vocab.len(),
        region_dim: data_cfg.dim,
        cavp: CavpConfig {
            hidden_size: 16,
            attn_size: 16,
            embed_size: 8,
            ..CavpConfig::desk()
        },
        word_context: WordContext::SentenceOutputs,
    };
    (CaptionModel::new(cfg, seed).unwrap(), data)
}

#[test]
fn adam_matches_recurrence_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::<f64>::new();
    let init: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let id = store.add("theta", Tensor::vector(init.clone())).unwrap();
    let mut adam = Adam::new(&store);
    let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 1e-2);
    let (mut theta, mut m, mut v) = (init, vec![0.0; 5], vec![0.0; 5]);
    for t in 1..=10 {
        let grad: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        store.get_mut(id).grad.data_mut().copy_from_slice(&grad);
        adam.step(&mut store, lr).unwrap();
        for i in 0..5 {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            let m_hat = m[i] / (1.0 - b1.powi(t));
            let v_hat = v[i] / (1.0 - b2.powi(t));
            theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        for (a, b) in store.value(id).data().iter().zip(&theta) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert_eq!(adam.steps(), 10);
}

#[test]
fn schedule_follows_step_decay() {
    let s = LrSchedule {
        base: 5e-4,
        decay: 0.8,
        every: 3,
    };
    let expected = [5e-4, 5e-4, 5e-4, 4e-4, 4e-4, 4e-4, 3.2e-4];
    for (e, want) in expected.iter().enumerate() {
        assert!((s.rate(e) - want).abs() < 1e-15);
    }
}

/// Plain gradient step `θ ← θ − lr · g`.
fn sgd(store: &ParamStore<f64>, grads: &Gradients<f64>, lr: f64) -> ParamStore<f64> {
    let mut next = store.clone();
    next.zero_grad();
    next.accumulate(grads, 1.0);
    for (_, p) in next.iter_mut() {
        let g = p.grad.data().to_vec();
        p.value.data_mut().iter_mut().zip(g).for_each(|(x, g)| *x -= lr * g);
    }
    next
}

fn sentence_logprob(model: &SentenceModel, store: &ParamStore<f64>, rf: &RegionFeatureSet<f64>, ids: &[usize]) -> f64 {
    let mut g = Graph::new(store);
    let dec = model.decoder(&mut g, rf);
    let init = model.init_state(&mut g);
    decode::teacher_forced(&mut g, &dec, init, ids).unwrap().log_prob(&g)
}

#[test]
fn scst_update_moves_sample_likelihood_with_advantage() {
    let spec: RewardSpec = "bleu-2".parse().unwrap();
    let mut checked = 0;
    for seed in 0..40 {
        let m = CaptionModel::<f64>::new(small(Mode::Sentence, 8), seed).unwrap();
        let sm = m.sentence().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rf = regions(&mut rng, 3, 10);
        let refs: Vec<Vec<usize>> = (0..2).map(|_| caption(&mut rng, 8, 4).content().to_vec()).collect();
        let out = scst_step(sm, &m.store, &rf, &refs, &spec, None, 6, seed).unwrap();
        let a = out.advantages[0];
        if a == 0.0 {
            assert!(out.grads.is_zero());
            continue;
        }
        let before = sentence_logprob(sm, &m.store, &rf, &out.samples[0]);
        let after = sentence_logprob(sm, &sgd(&m.store, &out.grads, 1e-6), &rf, &out.samples[0]);
        assert_eq!((after - before).signum(), a.signum(), "seed {seed}");
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} non-zero advantages");
}

fn paragraph_token_logprob(model: &ParagraphModel, store: &ParamStore<f64>, rf: &RegionFeatureSet<f64>, sents: &[Vec<usize>]) -> f64 {
    let mut g = Graph::new(store);
    let ri = rf.to_graph(&mut g);
    let seqs: Vec<TokenSequence> = sents.iter().map(|s| TokenSequence::generated(s.clone())).collect();
    let out = model.teacher_forced(&mut g, &ri, &seqs).unwrap();
    out.iter().flat_map(|s| s.token_log_probs.iter()).map(|&v| g.scalar(v)).sum()
}

#[test]
fn paragraph_scst_update_moves_sample_likelihood_with_advantage() {
    let spec: RewardSpec = "bleu-1".parse().unwrap();
    let mut checked = 0;
    for seed in 0..30 {
        let m = CaptionModel::<f64>::new(small(Mode::Paragraph, 8), seed).unwrap();
        let pm = m.paragraph().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rf = regions(&mut rng, 4, 10);
        let gt: Vec<TokenSequence> = (0..3).map(|_| caption(&mut rng, 8, 3)).collect();
        let out = paragraph_scst_step(pm, &m.store, &rf, &[gt], &spec, None, ScstLevel::Paragraph, 3, 5, seed).unwrap();
        let a = out.advantages[0];
        if a == 0.0 {
            assert!(out.grads.is_zero());
            continue;
        }
        let before = paragraph_token_logprob(pm, &m.store, &rf, &out.samples);
        let after = paragraph_token_logprob(pm, &sgd(&m.store, &out.grads, 1e-6), &rf, &out.samples);
        assert_eq!((after - before).signum(), a.signum(), "seed {seed}");
        checked += 1;
    }
    assert!(checked >= 5, "only {checked} non-zero advantages");
}

#[test]
fn sentence_level_scst_gives_one_advantage_per_sentence() {
    let spec: RewardSpec = "bleu-1".parse().unwrap();
    let m = CaptionModel::<f64>::new(small(Mode::Paragraph, 9), 2).unwrap();
    let pm = m.paragraph().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rf = regions(&mut rng, 4, 10);
    let gt: Vec<TokenSequence> = (0..3).map(|_| caption(&mut rng, 9, 3)).collect();
    let out = paragraph_scst_step(pm, &m.store, &rf, &[gt], &spec, None, ScstLevel::Sentence, 6, 5, 7).unwrap();
    assert_eq!(out.advantages.len(), 3);
    assert_eq!(out.samples.len(), 3);
    assert!(out.report.loss.is_finite() && out.grads.is_finite());
}

fn variant_configs() -> Vec<ModelConfig> {
    let base = small(Mode::Sentence, 9);
    let mut out = Vec::new();
    for mode in [Mode::Sentence, Mode::Paragraph] {
        for (share, ctx, variant, word_context) in [
            (true, ContextMode::FullHistory, CavpVariant::Full, WordContext::SentenceOutputs),
            (false, ContextMode::FullHistory, CavpVariant::Full, WordContext::PreviousWords),
            (true, ContextMode::LastStep, CavpVariant::Full, WordContext::SentenceOutputs),
            (false, ContextMode::FullHistory, CavpVariant::SingleOnly, WordContext::SentenceOutputs),
        ] {
            out.push(ModelConfig {
                mode,
                cavp: CavpConfig {
                    share_lstm: share,
                    context_mode: ctx,
                    variant,
                    ..base.cavp
                },
                word_context,
                ..base
            });
        }
    }
    out
}

#[test]
fn every_model_variant_passes_gradient_check_with_cloning() {
    let expert = Expert::from_ids([4, 5]);
    for (i, cfg) in variant_configs().into_iter().enumerate() {
        let mut m = CaptionModel::<f64>::new(cfg, i as u64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let rf = regions(&mut rng, 3, 10);
        let y = caption(&mut rng, 9, 4);
        let para: Vec<TokenSequence> = (0..2).map(|_| caption(&mut rng, 9, 3)).collect();
        let net = m.net.clone();
        let report = grad_check(
            &mut m.store,
            |p| {
                let mut g = Graph::new(p);
                let ri = rf.to_graph(&mut g);
                let bc = Some(Cloning { expert: &expert, mu: 0.7 });
                let loss = match &net {
                    cavp_core::model::Network::Sentence(s) => xe_loss(&mut g, s, &ri, &y, bc)?.0,
                    cavp_core::model::Network::Paragraph(s) => paragraph_xe_loss(&mut g, s, &ri, &para, 1.0, 5.0, bc)?.0,
                };
                Ok((g.scalar(loss), g.backward(loss)?))
            },
            GradCheckConfig {
                coords_per_param: 3,
                seed: i as u64,
                ..GradCheckConfig::default()
            },
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "config {i}: {report:?}");
    }
}

#[test]
fn zero_epochs_leave_the_model_at_initialization() {
    let (mut model, data) = synth_model(SynthConfig { n_images: 4, ..SynthConfig::default() }, Mode::Sentence, 1);
    let init = bits(&model.store);
    let dir = tempfile::tempdir().unwrap();
    let reports = train_to_dir(&mut model, &data, &quick_config(0, 0), dir.path(), |_| {}).unwrap();
    assert!(reports.is_empty());
    assert_eq!(bits(&model.store), init);
    let (loaded, _, _) = CaptionModel::<f64>::load(&dir.path().join("final.ckpt")).unwrap();
    assert_eq!(bits(&loaded.store), init);
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.trim(), "epoch,phase,mean_loss,mean_reward_sample,mean_reward_greedy,train_CIDEr");
}

#[test]
fn training_writes_metrics_and_checkpoints() {
    let (mut model, data) = synth_model(SynthConfig { n_images: 4, ..SynthConfig::default() }, Mode::Sentence, 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        checkpoint_every: 2,
        eval_every: 1,
        ..quick_config(2, 2)
    };
    let reports = train_to_dir(&mut model, &data, &cfg, dir.path(), |_| {}).unwrap();
    assert_eq!(reports.len(), 4);
    let mut rdr = csv::Reader::from_path(dir.path().join("metrics.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, ["epoch", "phase", "mean_loss", "mean_reward_sample", "mean_reward_greedy", "train_CIDEr"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(&rows[0][1], "XE");
    assert_eq!(&rows[3][1], "RL");
    assert!(rows[0][3].is_empty() && !rows[3][3].is_empty());
    for name in ["epoch_0002.ckpt", "epoch_0004.ckpt", "final.ckpt"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn training_is_bitwise_reproducible() {
    for mode in [Mode::Sentence, Mode::Paragraph] {
        let synth = SynthConfig {
            n_images: 4,
            paragraphs: mode == Mode::Paragraph,
            ..SynthConfig::default()
        };
        let run = |seed: u64| {
            let (mut model, data) = synth_model(synth, mode, 3);
            let cfg = TrainConfig {
                seed,
                scst_level: ScstLevel::Sentence,
                ..quick_config(2, 1)
            };
            train(&mut model, &data, &cfg, |_, _| Ok(())).unwrap();
            bits(&model.store)
        };
        assert_eq!(run(0), run(0));
        assert_ne!(run(0), run(1));
    }
}

#[test]
fn cross_entropy_falls_during_training() {
    let (mut model, data) = synth_model(SynthConfig { n_images: 6, ..SynthConfig::default() }, Mode::Sentence, 4);
    let cfg = TrainConfig {
        behavior_cloning: false,
        ..quick_config(200, 0)
    };
    let reports = train(&mut model, &data, &cfg, |_, _| Ok(())).unwrap();
    let block = |i: usize| reports[i * 20..(i + 1) * 20].iter().map(|r| r.mean_loss).sum::<f64>() / 20.0;
    for i in 1..10 {
        assert!(block(i) < block(i - 1), "block {i}: {} ≥ {}", block(i), block(i - 1));
    }
    assert!(block(9) < 0.1 * block(0));
}

#[test]
fn invalid_configs_are_rejected_before_training() {
    let (mut model, data) = synth_model(SynthConfig { n_images: 2, ..SynthConfig::default() }, Mode::Sentence, 0);
    let init = bits(&model.store);
    for bad in [
        TrainConfig { batch_size: 0, ..quick_config(1, 0) },
        TrainConfig { reward: "meteor".into(), ..quick_config(1, 0) },
        TrainConfig { clip_norm: 0.0, ..quick_config(1, 0) },
        TrainConfig { xe: phase(1, -1.0), ..quick_config(1, 0) },
    ] {
        assert!(matches!(train(&mut model, &data, &bad, |_, _| Ok(())), Err(cavp_core::Error::Config(_))));
    }
    assert_eq!(bits(&model.store), init);
    let unknown = r#"{"xe": {"epochs": 1, "lr": {"base": 0.1, "decay": 1.0, "every": 1}}, "bogus": 1}"#;
    assert!(serde_json::from_str::<TrainConfig>(unknown).is_err());
}
