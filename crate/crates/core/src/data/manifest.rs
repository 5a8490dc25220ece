//! Dataset manifests and their conversion to encoded examples.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::features::{read_feature_file, FeatureFile};
use crate::data::text::{build_vocab, tokenize};
use crate::data::{Dataset, Example, Target};
use crate::language::Vocabulary;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}

/// Region rows `row_start..row_end` of a feature file. Relative paths are
/// resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRef {
    pub path: PathBuf,
    pub row_start: usize,
    pub row_end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image_id: String,
    pub feature_ref: FeatureRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captions: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paragraph: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub split: Split,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Data("manifest has no entries".into()));
        }
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.image_id.as_str()) {
                return Err(Error::Data(format!("duplicate image id {}", e.image_id)));
            }
            match (&e.captions, &e.paragraph) {
                (Some(c), None) if !c.is_empty() => {}
                (None, Some(p)) if !p.is_empty() => {}
                _ => {
                    return Err(Error::Data(format!(
                        "entry {} needs a non-empty captions or paragraph field, not both",
                        e.image_id
                    )))
                }
            }
            if e.feature_ref.row_start >= e.feature_ref.row_end {
                return Err(Error::Data(format!("entry {} has an empty feature row range", e.image_id)));
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read manifest {}: {e}", path.display())))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::Data(format!("invalid manifest {}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Whether entries carry paragraphs rather than captions.
    pub fn is_paragraph(&self) -> Result<bool> {
        let paragraphs = self.entries.iter().filter(|e| e.paragraph.is_some()).count();
        match paragraphs {
            0 => Ok(false),
            n if n == self.entries.len() => Ok(true),
            _ => Err(Error::Data("manifest mixes caption and paragraph entries".into())),
        }
    }

    /// Tokenized sentences of every entry, for vocabulary building.
    pub fn corpus(&self) -> Vec<Vec<String>> {
        self.entries
            .iter()
            .flat_map(|e| e.captions.iter().chain(e.paragraph.iter()).flatten())
            .map(|s| tokenize(s))
            .collect()
    }

    /// Builds COCO-style entries from `{"annotations": [{image_id, caption}]}`.
    /// Images are taken in ascending id order and mapped to consecutive
    /// `k`-row blocks of `feature_path`.
    pub fn from_coco(json: &str, feature_path: &Path, k: usize, split: Split) -> Result<Self> {
        #[derive(Deserialize)]
        struct Ann {
            image_id: serde_json::Value,
            caption: String,
        }
        #[derive(Deserialize)]
        struct Coco {
            annotations: Vec<Ann>,
        }
        let coco: Coco = serde_json::from_str(json).map_err(|e| Error::Data(format!("invalid COCO annotations: {e}")))?;
        let mut by_image: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for a in coco.annotations {
            let id = match a.image_id {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            by_image.entry(id).or_default().push(a.caption);
        }
        let entries = by_image
            .into_iter()
            .enumerate()
            .map(|(i, (image_id, captions))| ManifestEntry {
                image_id,
                feature_ref: FeatureRef {
                    path: feature_path.to_path_buf(),
                    row_start: i * k,
                    row_end: (i + 1) * k,
                },
                captions: Some(captions),
                paragraph: None,
            })
            .collect();
        let m = Self { split, entries };
        m.validate()?;
        Ok(m)
    }
}

/// Options for turning text into token ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeOptions {
    pub min_count: usize,
    pub max_len: usize,
}

/// Encodes a validated manifest against already loaded feature files.
pub fn encode_manifest<T: Scalar>(
    manifest: &DatasetManifest,
    files: &BTreeMap<PathBuf, FeatureFile>,
    vocab: Option<Vocabulary>,
    opts: EncodeOptions,
) -> Result<Dataset<T>> {
    manifest.validate()?;
    let paragraph = manifest.is_paragraph()?;
    let vocab = match vocab {
        Some(v) => v,
        None => build_vocab(&manifest.corpus(), opts.min_count)?,
    };
    let mut examples = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let file = files
            .get(&e.feature_ref.path)
            .ok_or_else(|| Error::Data(format!("no feature file loaded for {}", e.feature_ref.path.display())))?;
        let regions = file
            .rows_as_set(e.feature_ref.row_start, e.feature_ref.row_end)
            .map_err(|err| Error::Data(format!("entry {}: {err}", e.image_id)))?;
        let encode = |s: &String| vocab.encode(&tokenize(s), opts.max_len);
        let target = if paragraph {
            Target::Paragraph(e.paragraph.iter().flatten().map(encode).collect())
        } else {
            Target::Captions(e.captions.iter().flatten().map(encode).collect())
        };
        examples.push(Example {
            image_id: e.image_id.clone(),
            regions,
            target,
        });
    }
    Dataset::new(vocab, examples)
}

/// Reads a manifest and every feature file it references, then encodes it.
/// Without a vocabulary one is built from the manifest's text.
pub fn load_dataset<T: Scalar>(manifest_path: &Path, vocab: Option<Vocabulary>, opts: EncodeOptions) -> Result<Dataset<T>> {
    let mut manifest = DatasetManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut files = BTreeMap::new();
    for e in &mut manifest.entries {
        if e.feature_ref.path.is_relative() {
            e.feature_ref.path = base.join(&e.feature_ref.path);
        }
        if !files.contains_key(&e.feature_ref.path) {
            let f = read_feature_file(&e.feature_ref.path)?;
            files.insert(e.feature_ref.path.clone(), f);
        }
    }
    encode_manifest(&manifest, &files, vocab, opts)
}

/// Region features of one image named in a manifest.
pub fn load_features<T: Scalar>(manifest_path: &Path, image_id: &str) -> Result<crate::cavp::RegionFeatureSet<T>> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let e = manifest
        .entries
        .iter()
        .find(|e| e.image_id == image_id)
        .ok_or_else(|| Error::Data(format!("unknown image id {image_id}")))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let path = if e.feature_ref.path.is_relative() {
        base.join(&e.feature_ref.path)
    } else {
        e.feature_ref.path.clone()
    };
    read_feature_file(&path)?.rows_as_set(e.feature_ref.row_start, e.feature_ref.row_end)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coco_ingestion_groups_by_image() {
        let json = r#"{"annotations": [
            {"image_id": 7, "caption": "A dog."},
            {"image_id": 3, "caption": "A cat."},
            {"image_id": 7, "caption": "The dog runs."}
        ]}"#;
        let m = DatasetManifest::from_coco(json, Path::new("f.bin"), 4, Split::Train).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[0].image_id, "3");
        assert_eq!(m.entries[1].captions.as_ref().unwrap().len(), 2);
        assert_eq!(m.entries[1].feature_ref.row_start, 4);
    }

    #[test]
    fn validation_rules() {
        let entry = |id: &str| ManifestEntry {
            image_id: id.into(),
            feature_ref: FeatureRef {
                path: "f.bin".into(),
                row_start: 0,
                row_end: 2,
            },
            captions: Some(vec!["a dog".into()]),
            paragraph: None,
        };
        let mut m = DatasetManifest {
            split: Split::Train,
            entries: vec![entry("a"), entry("a")],
        };
        assert!(m.validate().is_err());
        m.entries[1].image_id = "b".into();
        assert!(m.validate().is_ok());
        m.entries[1].captions = Some(vec![]);
        assert!(m.validate().is_err());
        let unknown = r#"{"split": "train", "entries": [], "extra": 1}"#;
        assert!(serde_json::from_str::<DatasetManifest>(unknown).is_err());
    }
}
