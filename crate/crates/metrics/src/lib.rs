//! Caption-evaluation metrics: BLEU-n, CIDEr-D and ROUGE-L.
//!
//! Every metric is generic over the token type, so the same code scores
//! whitespace tokens (`String`/`&str`) at evaluation time and vocabulary ids
//! (`u32`) inside the self-critical reward loop. Maps are ordered
//! (`BTreeMap`) so floating-point sums are accumulated in a fixed order and
//! scores are bitwise reproducible.

mod bleu;
mod cider;
mod error;
mod ngram;
mod reward;
mod rouge;

pub use bleu::{bleu, corpus_bleu, BleuStats, SENTENCE_SMOOTHING};
pub use cider::{build_idf, cider, cider_d, corpus_cider_d, IdfTable, DEFAULT_SIGMA};
pub use error::MetricError;
pub use ngram::{NGramStats, MAX_ORDER};
pub use reward::{reward, Metric, RewardSpec};
pub use rouge::{lcs_len, rouge_l, DEFAULT_BETA};

/// Bound shared by every token type the metrics accept.
pub trait Token: Ord + Clone {}

impl<T: Ord + Clone> Token for T {}
