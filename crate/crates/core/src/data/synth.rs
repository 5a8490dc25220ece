//! Synthetic desk-scale dataset. Each region is a noisy copy of an
//! (object, attribute) prototype; captions read
//! `a <attr> <obj> <relation> a <attr> <obj>` where the relation is a
//! function of both objects, so a correct caption needs two regions.
//!
//! Feature layout: `[object 8 | attribute 4 | role 2 | order 4 | noise]`.
//! Role marks the subject and object region of a described pair; order marks
//! which sentence of a paragraph the pair belongs to.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::features::{write_feature_file, FeatureFile};
use crate::data::manifest::{encode_manifest, DatasetManifest, EncodeOptions, FeatureRef, ManifestEntry, Split};
use crate::data::Dataset;
use crate::{Error, Result, Scalar};

pub const OBJECTS: [&str; 8] = ["man", "woman", "dog", "horse", "cat", "bike", "ball", "kite"];
pub const ATTRIBUTES: [&str; 4] = ["red", "blue", "black", "white"];
pub const RELATIONS: [&str; 4] = ["riding", "holding", "chasing", "watching"];
const ROLE_OFFSET: usize = 12;
const ORDER_OFFSET: usize = 14;
pub const MIN_DIM: usize = 18;
pub const MAX_PAIRS: usize = 4;
pub const FEATURE_FILE_NAME: &str = "features.bin";
pub const MANIFEST_FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_images: usize,
    pub k: usize,
    pub dim: usize,
    pub captions_per_image: usize,
    /// Emit paragraphs of 2 to 4 sentences instead of captions.
    pub paragraphs: bool,
    /// Standard deviation of the noise added to prototype coordinates.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_images: 20,
            k: 6,
            dim: 24,
            captions_per_image: 2,
            paragraphs: false,
            noise: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_images == 0 {
            return Err(Error::Config("n_images must be at least 1".into()));
        }
        if self.dim < MIN_DIM {
            return Err(Error::Config(format!("synthetic features need dim ≥ {MIN_DIM}")));
        }
        let min_k = if self.paragraphs { 4 } else { 2 };
        if self.k < min_k {
            return Err(Error::Config(format!("synthetic images need k ≥ {min_k}")));
        }
        if self.captions_per_image == 0 {
            return Err(Error::Config("captions_per_image must be at least 1".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be a finite non-negative number".into()));
        }
        Ok(())
    }
}

/// Ground truth of one synthetic image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthImage {
    pub image_id: String,
    /// (object, attribute) index of every region.
    pub regions: Vec<(usize, usize)>,
    /// Described (subject region, object region) pairs in sentence order.
    pub pairs: Vec<(usize, usize)>,
    /// Normalized sentences, one per pair.
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub config: SynthConfig,
    pub manifest: DatasetManifest,
    pub features: FeatureFile,
    pub images: Vec<SynthImage>,
}

pub fn relation(subject: usize, object: usize) -> usize {
    (subject + object) % RELATIONS.len()
}

fn sentence(regions: &[(usize, usize)], (s, o): (usize, usize)) -> String {
    let (so, sa) = regions[s];
    let (oo, oa) = regions[o];
    format!(
        "a {} {} {} a {} {}",
        ATTRIBUTES[sa],
        OBJECTS[so],
        RELATIONS[relation(so, oo)],
        ATTRIBUTES[oa],
        OBJECTS[oo]
    )
}

/// Surface variant `v` of a normalized sentence; all variants tokenize alike.
fn variant(s: &str, v: usize) -> String {
    match v % 3 {
        0 => s.to_string(),
        1 => {
            let mut c = s.to_string();
            c[..1].make_ascii_uppercase();
            format!("{c}.")
        }
        _ => s.to_uppercase(),
    }
}

/// Names every token the generator can emit.
pub fn vocab_closure() -> Vec<&'static str> {
    let mut v = vec!["a"];
    v.extend(ATTRIBUTES);
    v.extend(OBJECTS);
    v.extend(RELATIONS);
    v
}

pub fn synth_dataset(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut features = FeatureFile::new(cfg.k, cfg.dim)?;
    let mut images = Vec::with_capacity(cfg.n_images);
    let mut entries = Vec::with_capacity(cfg.n_images);
    let width = format!("{}", cfg.n_images - 1).len();
    for i in 0..cfg.n_images {
        let regions: Vec<(usize, usize)> = (0..cfg.k)
            .map(|_| (rng.gen_range(0..OBJECTS.len()), rng.gen_range(0..ATTRIBUTES.len())))
            .collect();
        let n_pairs = if cfg.paragraphs {
            rng.gen_range(2..=MAX_PAIRS.min(cfg.k / 2))
        } else {
            1
        };
        let mut slots: Vec<usize> = (0..cfg.k).collect();
        slots.shuffle(&mut rng);
        let pairs: Vec<(usize, usize)> = (0..n_pairs).map(|p| (slots[2 * p], slots[2 * p + 1])).collect();

        let mut block = vec![vec![0f32; cfg.dim]; cfg.k];
        for (r, &(obj, attr)) in regions.iter().enumerate() {
            let row = &mut block[r];
            row[obj] = 1.0;
            row[OBJECTS.len() + attr] = 1.0;
            for x in row.iter_mut() {
                *x += (gaussian(&mut rng) * cfg.noise) as f32;
            }
        }
        for (p, &(s, o)) in pairs.iter().enumerate() {
            block[s][ROLE_OFFSET] += 1.0;
            block[o][ROLE_OFFSET + 1] += 1.0;
            if cfg.paragraphs {
                block[s][ORDER_OFFSET + p] += 1.0;
                block[o][ORDER_OFFSET + p] += 1.0;
            }
        }
        let index = features.push(&block)?;
        let sentences: Vec<String> = pairs.iter().map(|&p| sentence(&regions, p)).collect();
        let image_id = format!("synth-{i:0width$}");
        let feature_ref = FeatureRef {
            path: PathBuf::from(FEATURE_FILE_NAME),
            row_start: index * cfg.k,
            row_end: (index + 1) * cfg.k,
        };
        let (captions, paragraph) = if cfg.paragraphs {
            (None, Some(sentences.iter().enumerate().map(|(j, s)| variant(s, j)).collect()))
        } else {
            (Some((0..cfg.captions_per_image).map(|v| variant(&sentences[0], v)).collect()), None)
        };
        entries.push(ManifestEntry {
            image_id: image_id.clone(),
            feature_ref,
            captions,
            paragraph,
        });
        images.push(SynthImage {
            image_id,
            regions,
            pairs,
            sentences,
        });
    }
    Ok(SynthData {
        config: *cfg,
        manifest: DatasetManifest {
            split: Split::Train,
            entries,
        },
        features,
        images,
    })
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller on (0, 1] to avoid ln(0).
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

impl SynthData {
    /// Encodes the dataset in memory with a vocabulary of every seen word.
    pub fn dataset<T: Scalar>(&self, max_len: usize) -> Result<Dataset<T>> {
        let mut files = BTreeMap::new();
        files.insert(PathBuf::from(FEATURE_FILE_NAME), self.features.clone());
        encode_manifest(&self.manifest, &files, None, EncodeOptions { min_count: 1, max_len })
    }
}

/// Writes `features.bin`, `manifest.json` and `captions.json` into `dir`.
pub fn write_synth(dir: &Path, data: &SynthData) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_feature_file(&dir.join(FEATURE_FILE_NAME), &data.features)?;
    data.manifest.write(&dir.join(MANIFEST_FILE_NAME))?;
    fs::write(dir.join("captions.json"), serde_json::to_string_pretty(&data.images)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::text::tokenize;

    #[test]
    fn deterministic_bytes() {
        let cfg = SynthConfig::default();
        let a = synth_dataset(&cfg).unwrap();
        let b = synth_dataset(&cfg).unwrap();
        assert_eq!(a.features.to_bytes(), b.features.to_bytes());
        assert_eq!(a.manifest, b.manifest);
        let c = synth_dataset(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.features.to_bytes(), c.features.to_bytes());
    }

    #[test]
    fn captions_stay_in_closure_and_name_present_objects() {
        let closure = vocab_closure();
        for paragraphs in [false, true] {
            let d = synth_dataset(&SynthConfig {
                paragraphs,
                k: 8,
                ..SynthConfig::default()
            })
            .unwrap();
            for (img, e) in d.images.iter().zip(&d.manifest.entries) {
                for text in e.captions.iter().chain(e.paragraph.iter()).flatten() {
                    assert!(tokenize(text).iter().all(|t| closure.contains(&t.as_str())));
                }
                for (&(s, o), sent) in img.pairs.iter().zip(&img.sentences) {
                    let toks = tokenize(sent);
                    assert_eq!(toks[2], OBJECTS[img.regions[s].0]);
                    assert_eq!(toks[6], OBJECTS[img.regions[o].0]);
                }
            }
        }
    }

    #[test]
    fn caption_variants_tokenize_identically() {
        let d = synth_dataset(&SynthConfig::default()).unwrap();
        for e in &d.manifest.entries {
            let caps = e.captions.as_ref().unwrap();
            assert_eq!(caps.len(), 2);
            assert_eq!(tokenize(&caps[0]), tokenize(&caps[1]));
        }
    }

    #[test]
    fn paragraphs_use_disjoint_pairs() {
        let d = synth_dataset(&SynthConfig {
            paragraphs: true,
            k: 8,
            ..SynthConfig::default()
        })
        .unwrap();
        for img in &d.images {
            assert!((2..=4).contains(&img.pairs.len()));
            let mut used: Vec<usize> = img.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
            used.sort_unstable();
            used.dedup();
            assert_eq!(used.len(), 2 * img.pairs.len());
        }
    }
}
