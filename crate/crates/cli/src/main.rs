mod caption;
mod config;
mod evaluate;
mod failure;
mod inspect;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use cavp_core::data::{load_dataset, synth_dataset, write_synth, EncodeOptions, SynthConfig};
use cavp_core::language::ModelConfig;
use cavp_core::model::CaptionModel;
use cavp_core::training::train_to_dir;
use cavp_metrics::Metric;
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use caption::{caption_image, load_images, par_map, DecodeMode, DecodeOptions};
use config::RunConfig;
use failure::{Failure, Outcome, Tag, CONFIG, DATA};

#[derive(Parser, Debug)]
#[command(name = "cavp", version, about = "Context-aware visual policy captioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model from a JSON run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Total epoch budget; the XE phase is truncated first.
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, env = "CAVP_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        train_manifest: Option<PathBuf>,
    },
    /// Caption images with a checkpoint; prints one JSON record per image.
    Caption {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset manifest naming the images.
        #[arg(long, conflicts_with = "features")]
        manifest: Option<PathBuf>,
        /// Bare feature file; blocks are named by index.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Restrict to these image ids.
        #[arg(long = "image-id")]
        image_ids: Vec<String>,
        #[arg(long, value_enum, default_value_t = DecodeMode::Greedy)]
        decode: DecodeMode,
        #[arg(long, default_value_t = 5)]
        beam_size: usize,
        #[arg(long, default_value_t = 16)]
        max_len: usize,
        #[arg(long, default_value_t = 6)]
        max_sentences: usize,
        #[arg(long, env = "CAVP_SEED", default_value_t = 0)]
        seed: u64,
        /// Write per-token attention records as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Score candidate captions against references; prints metrics JSON.
    Evaluate {
        /// JSON array or JSON lines of {image_id, caption}.
        #[arg(long)]
        candidates: PathBuf,
        /// Dataset manifest or an object mapping image ids to caption lists.
        #[arg(long)]
        references: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "bleu-1,bleu-2,bleu-3,bleu-4,cider-d,rouge-l")]
        metrics: Vec<String>,
    },
    /// Write the synthetic relation dataset.
    Synth {
        #[arg(long, env = "CAVP_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        n_images: usize,
        #[arg(long, default_value_t = 6)]
        k: usize,
        #[arg(long, default_value_t = 24)]
        dim: usize,
        #[arg(long, default_value_t = 2)]
        captions_per_image: usize,
        /// Emit paragraphs instead of captions.
        #[arg(long)]
        paragraphs: bool,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Summarize an attention trace written by `caption --trace`.
    InspectTrace {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long = "image-id")]
        image_id: Option<String>,
    },
}

fn print_json<T: Serialize>(value: &T) -> Outcome {
    let line = serde_json::to_string(value).or_code(failure::NUMERIC, "output is not representable as JSON")?;
    println!("{line}");
    Ok(())
}

fn train(
    config: PathBuf,
    epochs: Option<usize>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    train_manifest: Option<PathBuf>,
) -> Outcome {
    let mut cfg = RunConfig::load(&config)?;
    if let Some(e) = epochs {
        cfg.limit_epochs(e);
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(d) = output_dir {
        cfg.output_dir = d;
    }
    if let Some(m) = train_manifest {
        cfg.train_manifest = m;
    }
    if !cfg.train_manifest.exists() {
        return Err(Failure::data(format!("dataset manifest {} does not exist", cfg.train_manifest.display())));
    }
    let opts = EncodeOptions {
        min_count: cfg.min_count,
        max_len: cfg.train.max_len,
    };
    let data = load_dataset::<f64>(&cfg.train_manifest, None, opts)?;
    let region_dim = data.examples[0].regions.dim();
    let model_cfg = ModelConfig {
        mode: cfg.mode,
        vocab_size: data.vocab.len(),
        region_dim,
        cavp: cfg.cavp,
        word_context: cfg.word_context,
    };
    let mut model = CaptionModel::<f64>::new(model_cfg, cfg.train.seed)?;
    let mut printed = Ok(());
    let reports = train_to_dir(&mut model, &data, &cfg.train, &cfg.output_dir, |r| {
        if printed.is_ok() {
            printed = print_json(&json!({
                "epoch": r.epoch,
                "phase": r.phase,
                "lr": r.lr,
                "mean_loss": r.mean_loss,
                "mean_reward_sample": r.mean_reward_sample,
                "mean_reward_greedy": r.mean_reward_greedy,
                "train_CIDEr": r.train_cider,
            }));
        }
    })?;
    printed?;
    print_json(&json!({
        "output_dir": cfg.output_dir,
        "checkpoint": cfg.output_dir.join("final.ckpt"),
        "epochs": reports.len(),
        "images": data.len(),
        "vocab_size": data.vocab.len(),
        "parameters": model.num_parameters(),
    }))
}

#[allow(clippy::too_many_arguments)]
fn caption(
    checkpoint: PathBuf,
    manifest: Option<PathBuf>,
    features: Option<PathBuf>,
    image_ids: Vec<String>,
    opts: DecodeOptions,
    trace: Option<PathBuf>,
    jobs: usize,
) -> Outcome {
    if opts.beam_size == 0 || opts.max_len == 0 || opts.max_sentences == 0 || jobs == 0 {
        return Err(Failure::config("--beam-size, --max-len, --max-sentences and --jobs must be positive"));
    }
    if !checkpoint.exists() {
        return Err(Failure::data(format!("checkpoint {} does not exist", checkpoint.display())));
    }
    let (model, vocab, _) = CaptionModel::<f64>::load(&checkpoint)?;
    let images = load_images(manifest.as_deref(), features.as_deref(), &image_ids)?;
    let results = par_map(images.len(), jobs, |i| caption_image(&model, &vocab, &images[i], i, opts))?;
    let mut trace_out = match &trace {
        Some(p) => Some(BufWriter::new(File::create(p).or_code(DATA, format!("cannot create {}", p.display()))?)),
        None => None,
    };
    for (record, lines) in &results {
        print_json(record)?;
        if let Some(w) = trace_out.as_mut() {
            for l in lines {
                serde_json::to_writer(&mut *w, l).or_code(DATA, "cannot write trace")?;
                w.write_all(b"\n").or_code(DATA, "cannot write trace")?;
            }
        }
    }
    if let Some(mut w) = trace_out {
        w.flush().or_code(DATA, "cannot write trace")?;
    }
    Ok(())
}

fn evaluate(candidates: PathBuf, references: PathBuf, metrics: Vec<String>) -> Outcome {
    let metrics: Vec<Metric> = metrics
        .iter()
        .map(|m| m.parse().or_code(CONFIG, format!("unknown metric {m}")))
        .collect::<Outcome<_>>()?;
    let cands = evaluate::read_candidates(&candidates)?;
    let refs = evaluate::read_references(&references)?;
    print_json(&evaluate::score(&cands, &refs, &metrics)?)
}

fn synth(cfg: SynthConfig, out_dir: PathBuf) -> Outcome {
    cfg.validate()?;
    let data = synth_dataset(&cfg)?;
    write_synth(&out_dir, &data)?;
    print_json(&json!({
        "out_dir": out_dir,
        "manifest": out_dir.join(cavp_core::data::synth::MANIFEST_FILE_NAME),
        "features": out_dir.join(cavp_core::data::synth::FEATURE_FILE_NAME),
        "images": data.images.len(),
        "regions": cfg.k,
        "dim": cfg.dim,
        "paragraphs": cfg.paragraphs,
    }))
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Train {
            config,
            epochs,
            seed,
            output_dir,
            train_manifest,
        } => train(config, epochs, seed, output_dir, train_manifest),
        Command::Caption {
            checkpoint,
            manifest,
            features,
            image_ids,
            decode,
            beam_size,
            max_len,
            max_sentences,
            seed,
            trace,
            jobs,
        } => {
            let opts = DecodeOptions {
                mode: decode,
                beam_size,
                max_len,
                max_sentences,
                seed,
            };
            caption(checkpoint, manifest, features, image_ids, opts, trace, jobs)
        }
        Command::Evaluate {
            candidates,
            references,
            metrics,
        } => evaluate(candidates, references, metrics),
        Command::Synth {
            seed,
            n_images,
            k,
            dim,
            captions_per_image,
            paragraphs,
            noise,
            out_dir,
        } => synth(
            SynthConfig {
                seed,
                n_images,
                k,
                dim,
                captions_per_image,
                paragraphs,
                noise,
            },
            out_dir,
        ),
        Command::InspectTrace { trace, image_id } => {
            let lines = inspect::read_trace(&trace)?;
            for s in inspect::summarize(lines, image_id.as_deref())? {
                print_json(&s)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {
            let _ = io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
