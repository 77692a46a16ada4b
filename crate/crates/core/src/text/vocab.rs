// SPDX-License-Identifier: MIT OR Apache-2.0

//! Whitespace vocabulary tokenizer for toy models.
//!
//! File format: a header line beginning with `#vocab`, followed by
//! `key=token` entries naming special tokens (`unk`, `mask`, `bos`, `eos`)
//! and an optional bare `uncased` flag. Every following line holds one
//! token; the first token line is id 0.
//!
//! ```text
//! #vocab unk=[UNK] mask=[MASK] uncased
//! [UNK]
//! [MASK]
//! the
//! ```

use std::collections::HashMap;

use super::{TextError, TokenId};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpecialTokens {
    pub unk: Option<TokenId>,
    pub mask: Option<TokenId>,
    pub bos: Option<TokenId>,
    pub eos: Option<TokenId>,
}

#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
    special: SpecialTokens,
    uncased: bool,
}

impl Vocab {
    /// Builds a vocabulary where `tokens[i]` has id `i`.
    pub fn new<S: Into<String>>(
        tokens: impl IntoIterator<Item = S>,
        uncased: bool,
    ) -> Result<Self, TextError> {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(TextError::InvalidVocab(format!(
                    "token {i} is empty or contains whitespace"
                )));
            }
            if ids.insert(t.clone(), i as TokenId).is_some() {
                return Err(TextError::InvalidVocab(format!("duplicate token `{t}`")));
            }
        }
        Ok(Self {
            tokens,
            ids,
            special: SpecialTokens::default(),
            uncased,
        })
    }

    /// Marks `token` as one of the special roles. The token must exist.
    pub fn with_special(mut self, role: &str, token: &str) -> Result<Self, TextError> {
        let id = self
            .id(token)
            .ok_or_else(|| TextError::InvalidVocab(format!("special token `{token}` not in vocabulary")))?;
        match role {
            "unk" => self.special.unk = Some(id),
            "mask" => self.special.mask = Some(id),
            "bos" => self.special.bos = Some(id),
            "eos" => self.special.eos = Some(id),
            other => return Err(TextError::InvalidVocab(format!("unknown special role `{other}`"))),
        }
        Ok(self)
    }

    pub fn parse(text: &str) -> Result<Self, TextError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .filter(|h| h.starts_with("#vocab"))
            .ok_or_else(|| TextError::InvalidVocab("missing `#vocab` header line".into()))?;

        let mut uncased = false;
        let mut roles = Vec::new();
        for field in header["#vocab".len()..].split_whitespace() {
            match field.split_once('=') {
                Some((role, token)) => roles.push((role.to_owned(), token.to_owned())),
                None if field == "uncased" => uncased = true,
                None => {
                    return Err(TextError::InvalidVocab(format!(
                        "unrecognized header field `{field}`"
                    )))
                }
            }
        }

        let mut vocab = Self::new(lines, uncased)?;
        for (role, token) in roles {
            vocab = vocab.with_special(&role, &token)?;
        }
        Ok(vocab)
    }

    pub fn to_file_string(&self) -> String {
        let mut header = String::from("#vocab");
        let roles = [
            ("unk", self.special.unk),
            ("mask", self.special.mask),
            ("bos", self.special.bos),
            ("eos", self.special.eos),
        ];
        for (role, id) in roles {
            if let Some(id) = id {
                header.push_str(&format!(" {role}={}", self.tokens[id as usize]));
            }
        }
        if self.uncased {
            header.push_str(" uncased");
        }
        let mut out = header;
        for t in &self.tokens {
            out.push('\n');
            out.push_str(t);
        }
        out.push('\n');
        out
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn special(&self) -> &SpecialTokens {
        &self.special
    }

    pub fn is_uncased(&self) -> bool {
        self.uncased
    }

    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>, TextError> {
        text.split_whitespace()
            .map(|word| {
                let folded;
                let word = if self.uncased {
                    folded = word.to_lowercase();
                    folded.as_str()
                } else {
                    word
                };
                self.id(word)
                    .or(self.special.unk)
                    .ok_or_else(|| TextError::UnknownWord(word.to_owned()))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<String, TextError> {
        let words = ids
            .iter()
            .map(|&id| self.token(id).ok_or(TextError::UnknownId(id)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(words.join(" "))
    }
}
