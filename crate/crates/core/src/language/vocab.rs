use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];
pub const MIN_VOCAB_SIZE: usize = 5;

/// Token to id bijection with fixed reserved ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from content words in id order; reserved tokens
    /// are prepended.
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(words.into_iter().map(Into::into));
        Self::from_all(tokens)
    }

    fn from_all(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < MIN_VOCAB_SIZE {
            return Err(Error::Data(format!(
                "vocabulary has {} ids, at least {MIN_VOCAB_SIZE} required",
                tokens.len()
            )));
        }
        for (i, r) in RESERVED.iter().enumerate() {
            if tokens[i] != *r {
                return Err(Error::Data(format!("id {i} must be reserved token {r}")));
            }
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::Data(format!("empty token at id {i}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or UNK.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Maps tokens to ids, keeps at most `max_len` of them and appends EOS.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], max_len: usize) -> TokenSequence {
        let mut ids: Vec<usize> = tokens.iter().take(max_len).map(|t| self.id(t.as_ref())).collect();
        ids.push(EOS);
        TokenSequence { ids }
    }

    /// Space-joined content words of `seq`.
    pub fn decode(&self, seq: &TokenSequence) -> String {
        seq.content()
            .iter()
            .map(|&id| self.token(id).unwrap_or(RESERVED[UNK]))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        Self::from_all(tokens).map_err(serde::de::Error::custom)
    }
}

/// Token ids of one sentence; ends with EOS unless truncated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence {
    ids: Vec<usize>,
}

impl TokenSequence {
    /// Validates that PAD never precedes content and that EOS, if present,
    /// is the last id.
    pub fn new(ids: Vec<usize>) -> Result<Self> {
        if let Some(p) = ids.iter().position(|&i| i == EOS) {
            if p + 1 != ids.len() {
                return Err(Error::Data("EOS must be the final token".into()));
            }
        }
        if let Some(p) = ids.iter().position(|&i| i == PAD) {
            if ids[p..].iter().any(|&i| i != PAD) {
                return Err(Error::Data("PAD inside sequence content".into()));
            }
        }
        Ok(Self { ids })
    }

    /// Wraps decoder output without validation. Decoders stop at the first
    /// EOS, so only reserved ids emitted as ordinary words can slip through.
    pub fn generated(ids: Vec<usize>) -> Self {
        Self { ids }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_terminated(&self) -> bool {
        self.ids.last() == Some(&EOS)
    }

    /// Ids without trailing padding and the terminal EOS.
    pub fn content(&self) -> &[usize] {
        let mut end = self.ids.len();
        while end > 0 && self.ids[end - 1] == PAD {
            end -= 1;
        }
        if end > 0 && self.ids[end - 1] == EOS {
            end -= 1;
        }
        &self.ids[..end]
    }
}

/// Flattens a paragraph into one id list.
pub fn flatten(paragraph: &[TokenSequence]) -> Vec<usize> {
    paragraph.iter().flat_map(|s| s.content().iter().copied()).collect()
}
