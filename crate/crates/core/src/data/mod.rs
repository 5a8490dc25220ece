//! Text processing, region-feature files, dataset manifests and the
//! synthetic dataset generator.

pub mod features;
pub mod manifest;
pub mod synth;
pub mod text;

use cavp_metrics::{build_idf, IdfTable};

use crate::cavp::RegionFeatureSet;
use crate::language::{flatten, TokenSequence, Vocabulary};
use crate::{Error, Result, Scalar};

pub use features::{read_feature_file, write_feature_file, FeatureFile, FEATURE_HEADER_LEN, FEATURE_MAGIC, FEATURE_VERSION};
pub use manifest::{encode_manifest, load_dataset, load_features, DatasetManifest, EncodeOptions, FeatureRef, ManifestEntry, Split};
pub use synth::{synth_dataset, write_synth, SynthConfig, SynthData, SynthImage};
pub use text::{build_vocab, detokenize, tokenize, trim};

/// Ground truth of one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    /// Independent reference captions.
    Captions(Vec<TokenSequence>),
    /// One paragraph as a list of sentences.
    Paragraph(Vec<TokenSequence>),
}

impl Target {
    /// References as flat id lists: each caption, or the flattened paragraph.
    pub fn reference_ids(&self) -> Vec<Vec<usize>> {
        match self {
            Target::Captions(c) => c.iter().map(|s| s.content().to_vec()).collect(),
            Target::Paragraph(p) => vec![flatten(p)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example<T: Scalar> {
    pub image_id: String,
    pub regions: RegionFeatureSet<T>,
    pub target: Target,
}

/// Encoded examples with their vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Scalar> {
    pub vocab: Vocabulary,
    pub examples: Vec<Example<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(vocab: Vocabulary, examples: Vec<Example<T>>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        let mut ids: Vec<&str> = examples.iter().map(|e| e.image_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Data(format!("duplicate image id {}", w[0])));
        }
        Ok(Self { vocab, examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Document frequencies over every image's references.
    pub fn idf(&self) -> IdfTable<usize> {
        let corpus: Vec<Vec<Vec<usize>>> = self.examples.iter().map(|e| e.target.reference_ids()).collect();
        build_idf(&corpus)
    }
}
