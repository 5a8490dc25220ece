//! A model configuration, its parameters and the network built over them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};

use crate::language::{Mode, ModelConfig, ParagraphModel, SentenceModel, Vocabulary};
use crate::substrate::{read_checkpoint, write_checkpoint, CheckpointHeader, ParamStore};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Network {
    Sentence(SentenceModel),
    Paragraph(ParagraphModel),
}

/// Parameters plus the network layout that indexes them.
#[derive(Debug, Clone)]
pub struct CaptionModel<T: Scalar> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub net: Network,
}

impl<T: Scalar> CaptionModel<T> {
    /// Registers and initializes all parameters from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let net = match config.mode {
            Mode::Sentence => Network::Sentence(SentenceModel::register(&mut store, config, &mut rng)?),
            Mode::Paragraph => Network::Paragraph(ParagraphModel::register(&mut store, config, &mut rng)?),
        };
        Ok(Self { config, store, net })
    }

    pub fn num_parameters(&self) -> usize {
        self.store.num_scalars()
    }

    pub fn sentence(&self) -> Option<&SentenceModel> {
        match &self.net {
            Network::Sentence(m) => Some(m),
            Network::Paragraph(_) => None,
        }
    }

    pub fn paragraph(&self) -> Option<&ParagraphModel> {
        match &self.net {
            Network::Paragraph(m) => Some(m),
            Network::Sentence(_) => None,
        }
    }

    /// Checkpoint header carrying the config and vocabulary.
    pub fn header(&self, vocab: &Vocabulary, extra: Map<String, Value>) -> Result<CheckpointHeader> {
        let mut h = CheckpointHeader::new(self.config.hash());
        h.extra = extra;
        h.extra.insert("model_config".into(), serde_json::to_value(self.config)?);
        h.extra.insert("vocab".into(), serde_json::to_value(vocab)?);
        Ok(h)
    }

    pub fn write<W: Write>(&self, out: &mut W, vocab: &Vocabulary, extra: Map<String, Value>) -> Result<()> {
        let header = self.header(vocab, extra)?;
        write_checkpoint(out, &header, &self.store)?;
        Ok(())
    }

    pub fn save(&self, path: &Path, vocab: &Vocabulary, extra: Map<String, Value>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w, vocab, extra)?;
        w.flush()?;
        Ok(())
    }

    /// Loads a checkpoint, rebuilding the network from its stored config.
    pub fn load(path: &Path) -> Result<(Self, Vocabulary, CheckpointHeader)> {
        let mut r = BufReader::new(File::open(path)?);
        let ckpt = read_checkpoint(&mut r)?;
        let cfg_value = ckpt
            .header
            .extra
            .get("model_config")
            .ok_or_else(|| Error::Config("checkpoint lacks model_config".into()))?;
        let config: ModelConfig = serde_json::from_value(cfg_value.clone())?;
        if config.hash() != ckpt.header.model_config_hash {
            return Err(Error::Config("checkpoint config hash does not match its model_config".into()));
        }
        let vocab: Vocabulary = serde_json::from_value(
            ckpt.header
                .extra
                .get("vocab")
                .cloned()
                .ok_or_else(|| Error::Config("checkpoint lacks vocab".into()))?,
        )?;
        if vocab.len() != config.vocab_size {
            return Err(Error::Config(format!(
                "checkpoint vocabulary has {} ids, config expects {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        let mut model = Self::new(config, 0)?;
        ckpt.load_into(&mut model.store)?;
        Ok((model, vocab, ckpt.header))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavp::CavpConfig;
    use crate::language::WordContext;

    #[test]
    fn save_load_round_trip() {
        let vocab = Vocabulary::from_words(["a", "b", "c"]).unwrap();
        let cfg = ModelConfig {
            mode: Mode::Paragraph,
            vocab_size: vocab.len(),
            region_dim: 5,
            cavp: CavpConfig {
                hidden_size: 4,
                attn_size: 3,
                embed_size: 2,
                ..CavpConfig::desk()
            },
            word_context: WordContext::SentenceOutputs,
        };
        let m = CaptionModel::<f64>::new(cfg, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        m.save(&p, &vocab, Map::new()).unwrap();
        let (back, v2, _) = CaptionModel::<f64>::load(&p).unwrap();
        assert_eq!(v2, vocab);
        assert_eq!(back.config, cfg);
        for ((_, a), (_, b)) in m.store.iter().zip(back.store.iter()) {
            assert_eq!(a.value, b.value);
        }
    }
}
