//! Language policy: vocabulary, the sentence and paragraph decoders, and
//! decoding strategies.

pub mod decode;
pub mod paragraph;
pub mod sentence;
pub mod vocab;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cavp::{AttentionRecord, AttentionTrace, CavpConfig, CavpOutput};
use crate::substrate::{Graph, Var};
use crate::{Error, Result, Scalar};

pub use decode::{beam, greedy, sample, teacher_forced, BeamResult, Decoded, StepDecoder, StepOutput};
pub use paragraph::{ParagraphDecode, ParagraphModel, ParagraphState, SentenceLpOutput, WordDecoder, CONTINUE, STOP};
pub use sentence::{SentenceDecoder, SentenceModel, SentenceState};
pub use vocab::{flatten, TokenSequence, Vocabulary, BOS, EOS, PAD, UNK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sentence,
    Paragraph,
}

/// Candidate pool of the word-level context sub-policy in paragraph mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WordContext {
    /// Previous sentence-level outputs `{v_1 .. v_{i-1}}`.
    #[default]
    SentenceOutputs,
    /// Previous word-level outputs of the current sentence.
    PreviousWords,
}

/// Architecture hyper-parameters; hashed into checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: Mode,
    pub vocab_size: usize,
    pub region_dim: usize,
    pub cavp: CavpConfig,
    #[serde(default)]
    pub word_context: WordContext,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.cavp.validate()?;
        if self.vocab_size < vocab::MIN_VOCAB_SIZE {
            return Err(Error::Config(format!(
                "vocab_size {} below minimum {}",
                self.vocab_size,
                vocab::MIN_VOCAB_SIZE
            )));
        }
        if self.region_dim == 0 {
            return Err(Error::Config("region_dim must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Log-softmax over the ids a decoder may emit. PAD and BOS are never
/// produced, so their log-probability is fixed at −∞.
pub fn word_log_probs<T: Scalar>(g: &mut Graph<'_, T>, logits: Var) -> Result<Var> {
    let n = g.len_of(logits);
    let open = g.slice(logits, EOS, n - EOS)?;
    let log_probs = g.log_softmax(open)?;
    let closed = g.input(vec![T::neg_infinity(); EOS]);
    Ok(g.concat(&[closed, log_probs]))
}

/// Attention records of a decode, labelled with the emitted words.
pub fn trace<T: Scalar>(g: &Graph<'_, T>, outputs: &[CavpOutput], ids: &[usize], vocab: Option<&Vocabulary>) -> AttentionTrace {
    outputs
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let mut r = AttentionRecord::from_output(g, i + 1, o);
            if let (Some(v), Some(&id)) = (vocab, ids.get(i)) {
                r.word = v.token(id).map(str::to_string);
            }
            r
        })
        .collect()
}
