// SPDX-License-Identifier: MIT OR Apache-2.0

//! Tokenizers for both model families.

pub mod bpe;
pub mod vocab;

use std::path::Path;

use thiserror::Error;

pub use bpe::BpeTokenizer;
pub use vocab::{SpecialTokens, Vocab};

pub type TokenId = u32;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("invalid BPE rules: {0}")]
    InvalidRules(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("token id {0} is out of range")]
    UnknownId(TokenId),
    #[error("word `{0}` is not in the vocabulary and no unk token is defined")]
    UnknownWord(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn read(path: &Path) -> Result<String, TextError> {
    std::fs::read_to_string(path).map_err(|source| TextError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone)]
pub enum Tokenizer {
    Vocab(Vocab),
    Bpe(Box<BpeTokenizer>),
}

impl Tokenizer {
    pub fn load_vocab(path: impl AsRef<Path>) -> Result<Self, TextError> {
        Ok(Self::Vocab(Vocab::parse(&read(path.as_ref())?)?))
    }

    pub fn load_bpe(merges: impl AsRef<Path>, vocab_json: impl AsRef<Path>) -> Result<Self, TextError> {
        Ok(Self::Bpe(Box::new(BpeTokenizer::from_files_content(
            &read(merges.as_ref())?,
            &read(vocab_json.as_ref())?,
        )?)))
    }

    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>, TextError> {
        match self {
            Self::Vocab(v) => v.encode(text),
            Self::Bpe(b) => Ok(b.encode(text)),
        }
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<String, TextError> {
        match self {
            Self::Vocab(v) => v.decode(ids),
            Self::Bpe(b) => b.decode(ids),
        }
    }

    /// Display form of a single token (BPE symbols are decoded to text).
    pub fn token_text(&self, id: TokenId) -> Result<String, TextError> {
        match self {
            Self::Vocab(v) => v.token(id).map(str::to_owned).ok_or(TextError::UnknownId(id)),
            Self::Bpe(b) => b.decode(&[id]),
        }
    }

    pub fn vocab_size(&self) -> usize {
        match self {
            Self::Vocab(v) => v.len(),
            Self::Bpe(b) => b.vocab_size(),
        }
    }

    pub fn mask_id(&self) -> Option<TokenId> {
        match self {
            Self::Vocab(v) => v.special().mask,
            Self::Bpe(_) => None,
        }
    }

    /// Encodes a word that continues a prompt. BPE words carry their
    /// leading space; the whitespace tokenizer ignores it.
    pub fn encode_continuation(&self, words: &str) -> Result<Vec<TokenId>, TextError> {
        self.encode(&format!(" {}", words.trim_start()))
    }
}
