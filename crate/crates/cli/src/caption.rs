//! Captioning with a trained checkpoint.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cavp_core::cavp::{AttentionRecord, RegionFeatureSet};
use cavp_core::data::{read_feature_file, DatasetManifest, FeatureFile};
use cavp_core::language::paragraph::Strategy;
use cavp_core::language::{decode, trace, TokenSequence, Vocabulary};
use cavp_core::model::{CaptionModel, Network};
use cavp_core::substrate::Graph;
use clap::ValueEnum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::failure::{Failure, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecodeMode {
    Greedy,
    Beam,
    Sample,
}

#[derive(Debug, Clone, Copy)]
pub struct DecodeOptions {
    pub mode: DecodeMode,
    pub beam_size: usize,
    pub max_len: usize,
    pub max_sentences: usize,
    pub seed: u64,
}

pub struct Image {
    pub id: String,
    pub regions: RegionFeatureSet<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image_id: String,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentences: Option<Vec<String>>,
    /// Summed log-probability of the emitted tokens.
    pub log_prob: f64,
}

/// One generated token's attention distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence: Option<usize>,
    #[serde(flatten)]
    pub record: AttentionRecord,
}

/// Images named by a manifest, or every block of a bare feature file with
/// its index as id. A non-empty `only` keeps the listed ids in that order.
pub fn load_images(manifest: Option<&Path>, features: Option<&Path>, only: &[String]) -> Outcome<Vec<Image>> {
    let mut images = match (manifest, features) {
        (Some(path), None) => {
            let m = DatasetManifest::read(path)?;
            let base = path.parent().unwrap_or(Path::new("."));
            let mut files: BTreeMap<PathBuf, FeatureFile> = BTreeMap::new();
            let mut out = Vec::with_capacity(m.entries.len());
            for e in &m.entries {
                let p = base.join(&e.feature_ref.path);
                if !files.contains_key(&p) {
                    files.insert(p.clone(), read_feature_file(&p)?);
                }
                out.push(Image {
                    id: e.image_id.clone(),
                    regions: files[&p].rows_as_set(e.feature_ref.row_start, e.feature_ref.row_end)?,
                });
            }
            out
        }
        (None, Some(path)) => {
            let f = read_feature_file(path)?;
            (0..f.count())
                .map(|i| Ok(Image { id: i.to_string(), regions: f.block(i)? }))
                .collect::<Outcome<Vec<_>>>()?
        }
        _ => return Err(Failure::config("exactly one of --manifest and --features is required")),
    };
    if !only.is_empty() {
        let mut by_id: BTreeMap<String, Image> = images.into_iter().map(|im| (im.id.clone(), im)).collect();
        images = only
            .iter()
            .map(|id| by_id.remove(id).ok_or_else(|| Failure::data(format!("unknown image id {id}"))))
            .collect::<Outcome<_>>()?;
    }
    if images.is_empty() {
        return Err(Failure::data("no images to caption"));
    }
    Ok(images)
}

fn words(vocab: &Vocabulary, ids: &[usize]) -> String {
    let content = TokenSequence::generated(ids.to_vec());
    let toks: Vec<&str> = content.content().iter().filter_map(|&id| vocab.token(id)).collect();
    toks.join(" ")
}

/// Decodes one image, then teacher-forces the result once more to read its
/// log-probability and attention trace uniformly across decode modes.
pub fn caption_image(
    model: &CaptionModel<f64>,
    vocab: &Vocabulary,
    image: &Image,
    index: usize,
    opts: DecodeOptions,
) -> Outcome<(CaptionRecord, Vec<TraceLine>)> {
    if image.regions.dim() != model.config.region_dim {
        return Err(Failure::data(format!(
            "image {} has region dimension {}, model expects {}",
            image.id,
            image.regions.dim(),
            model.config.region_dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(index as u64));
    let rf = &image.regions;
    let line = |sentence, record| TraceLine {
        image_id: image.id.clone(),
        sentence,
        record,
    };
    match &model.net {
        Network::Sentence(sm) => {
            let ids = match opts.mode {
                DecodeMode::Greedy => sm.decode_greedy(&model.store, rf, opts.max_len, None)?.0,
                DecodeMode::Beam => sm.decode_beam(&model.store, rf, opts.beam_size, opts.max_len)?.0,
                DecodeMode::Sample => {
                    let mut g = Graph::new(&model.store);
                    let dec = sm.decoder(&mut g, rf);
                    let init = sm.init_state(&mut g);
                    TokenSequence::generated(decode::sample(&mut g, &dec, init, opts.max_len, &mut rng)?.ids)
                }
            };
            let mut g = Graph::new(&model.store);
            let dec = sm.decoder(&mut g, rf);
            let init = sm.init_state(&mut g);
            let d = decode::teacher_forced(&mut g, &dec, init, ids.ids())?;
            let lines = trace(&g, &d.cavp, &d.ids, Some(vocab)).into_iter().map(|r| line(None, r)).collect();
            let record = CaptionRecord {
                image_id: image.id.clone(),
                caption: words(vocab, ids.ids()),
                sentences: None,
                log_prob: d.log_prob(&g),
            };
            Ok((record, lines))
        }
        Network::Paragraph(pm) => {
            let strategy = match opts.mode {
                DecodeMode::Greedy => Strategy::Greedy,
                DecodeMode::Beam => Strategy::Beam(opts.beam_size),
                DecodeMode::Sample => Strategy::Sample(&mut rng),
            };
            let p = pm.decode_paragraph(&model.store, rf, opts.max_sentences, opts.max_len, strategy, None)?;
            let mut g = Graph::new(&model.store);
            let ri = rf.to_graph(&mut g);
            let sents = pm.teacher_forced(&mut g, &ri, &p.sentences)?;
            let mut lines = Vec::new();
            let mut log_prob = 0.0;
            for (i, s) in sents.iter().enumerate() {
                log_prob += s.token_log_probs.iter().map(|&v| g.scalar(v)).sum::<f64>();
                lines.extend(trace(&g, &s.word_cavp, &s.ids, Some(vocab)).into_iter().map(|r| line(Some(i), r)));
            }
            let sentences: Vec<String> = p.sentences.iter().map(|s| words(vocab, s.ids())).collect();
            let record = CaptionRecord {
                image_id: image.id.clone(),
                caption: sentences.join(". "),
                sentences: Some(sentences),
                log_prob,
            };
            Ok((record, lines))
        }
    }
}

/// Maps `f` over `0..n` on up to `jobs` threads, keeping input order.
pub fn par_map<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> Outcome<T> + Sync) -> Outcome<Vec<T>> {
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(&f).collect();
    }
    let f = &f;
    let parts: Vec<Vec<(usize, Outcome<T>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| s.spawn(move || (w..n).step_by(jobs).map(|i| (i, f(i))).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut slots: Vec<Option<Outcome<T>>> = (0..n).map(|_| None).collect();
    for (i, r) in parts.into_iter().flatten() {
        slots[i] = Some(r);
    }
    slots.into_iter().map(|r| r.expect("every index mapped")).collect()
}
