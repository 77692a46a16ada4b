// SPDX-License-Identifier: MIT OR Apache-2.0

//! GPT-2 style byte-level BPE.
//!
//! Text is split with the GPT-2 pre-tokenization pattern, each piece's UTF-8
//! bytes are mapped through the fixed byte-to-unicode table, and merges are
//! applied lowest rank first until no ranked pair remains.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

use super::{TextError, TokenId};

/// GPT-2 pattern minus the trailing `\s+(?!\S)` lookahead, which the
/// `regex` crate cannot express. [`pre_tokenize`] restores its effect.
const PRETOKENIZE: &str = r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+";

fn pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(PRETOKENIZE).expect("static pattern"))
}

/// Splits `text` into the pieces GPT-2 feeds to BPE.
pub fn pre_tokenize(text: &str) -> Vec<&str> {
    let re = pattern();
    let mut pieces = Vec::new();
    let mut at = 0;
    while at < text.len() {
        let Some(m) = re.find_at(text, at) else { break };
        let mut end = m.end();
        let piece = m.as_str();
        // `\s+(?!\S)`: a whitespace run followed by a non-space leaves its
        // last char for the next piece.
        if end < text.len() && piece.chars().all(char::is_whitespace) {
            let mut chars = piece.char_indices();
            if let (Some(_), Some(_)) = (chars.next(), chars.next()) {
                let last = piece.char_indices().last().map(|(i, _)| i).unwrap_or(0);
                end = m.start() + last;
            }
        }
        pieces.push(&text[m.start()..end]);
        at = end;
    }
    pieces
}

/// The conventional GPT-2 byte-to-unicode table.
pub fn bytes_to_unicode() -> [char; 256] {
    let mut table = ['\0'; 256];
    let printable = |b: u32| {
        (u32::from(b'!')..=u32::from(b'~')).contains(&b)
            || (0xA1..=0xAC).contains(&b)
            || (0xAE..=0xFF).contains(&b)
    };
    let mut extra = 0u32;
    for b in 0..256u32 {
        let cp = if printable(b) {
            b
        } else {
            extra += 1;
            255 + extra
        };
        table[b as usize] = char::from_u32(cp).expect("valid code point");
    }
    table
}

#[derive(Debug, Clone)]
pub struct BpeTokenizer {
    byte_encoder: [char; 256],
    byte_decoder: HashMap<char, u8>,
    ranks: HashMap<(String, String), usize>,
    encoder: HashMap<String, TokenId>,
    decoder: Vec<String>,
}

impl BpeTokenizer {
    /// `merges` are symbol pairs in priority order; `vocab` maps symbols to ids.
    ///
    /// Rejects vocabularies that are not dense, merges whose result is not in
    /// the vocabulary, and vocabularies missing any of the 256 byte symbols.
    pub fn new(merges: Vec<(String, String)>, vocab: HashMap<String, TokenId>) -> Result<Self, TextError> {
        let byte_encoder = bytes_to_unicode();
        let byte_decoder = byte_encoder
            .iter()
            .enumerate()
            .map(|(b, &c)| (c, b as u8))
            .collect();

        let mut decoder = vec![None; vocab.len()];
        for (sym, &id) in &vocab {
            let slot = decoder.get_mut(id as usize).ok_or_else(|| {
                TextError::InvalidRules(format!("id {id} of `{sym}` outside 0..{}", vocab.len()))
            })?;
            if slot.replace(sym.clone()).is_some() {
                return Err(TextError::InvalidRules(format!("id {id} assigned twice")));
            }
        }
        let decoder: Vec<String> = decoder.into_iter().map(Option::unwrap_or_default).collect();

        for c in &byte_encoder {
            if !vocab.contains_key(&c.to_string()) {
                return Err(TextError::InvalidRules(format!(
                    "byte symbol `{c}` missing from vocabulary"
                )));
            }
        }

        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, (a, b)) in merges.into_iter().enumerate() {
            let merged = format!("{a}{b}");
            if !vocab.contains_key(&merged) {
                return Err(TextError::InvalidRules(format!(
                    "merge `{a} {b}` produces `{merged}`, which is not in the vocabulary"
                )));
            }
            // The first occurrence of a pair wins, as in the reference loader.
            ranks.entry((a, b)).or_insert(rank);
        }

        Ok(Self {
            byte_encoder,
            byte_decoder,
            ranks,
            encoder: vocab,
            decoder,
        })
    }

    /// Parses a merges file (`a b` per line; a leading `#version` line and
    /// blank lines are skipped) and a JSON symbol→id object.
    pub fn from_files_content(merges: &str, vocab_json: &str) -> Result<Self, TextError> {
        let vocab: HashMap<String, TokenId> = serde_json::from_str(vocab_json)
            .map_err(|e| TextError::InvalidRules(format!("vocab JSON: {e}")))?;
        let mut pairs = Vec::new();
        for (lineno, line) in merges.lines().enumerate() {
            if line.starts_with("#version") || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                    pairs.push((a.to_owned(), b.to_owned()))
                }
                _ => {
                    return Err(TextError::InvalidRules(format!(
                        "merges line {}: expected `symbolA symbolB`",
                        lineno + 1
                    )))
                }
            }
        }
        Self::new(pairs, vocab)
    }

    pub fn vocab_size(&self) -> usize {
        self.decoder.len()
    }

    pub fn id(&self, symbol: &str) -> Option<TokenId> {
        self.encoder.get(symbol).copied()
    }

    pub fn symbol(&self, id: TokenId) -> Option<&str> {
        self.decoder.get(id as usize).map(String::as_str)
    }

    fn merge_word(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(String::from).collect();
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, i)))
                .min();
            let Some((_, first)) = best else { break };
            let (left, right) = (symbols[first].clone(), symbols[first + 1].clone());

            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
                    merged.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut ids = Vec::new();
        for piece in pre_tokenize(text) {
            let mapped: String = piece.bytes().map(|b| self.byte_encoder[b as usize]).collect();
            for sym in self.merge_word(&mapped) {
                // Every merge result and byte symbol is validated at construction.
                ids.push(self.encoder[&sym]);
            }
        }
        ids
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<String, TextError> {
        let mut bytes = Vec::new();
        for &id in ids {
            let sym = self.symbol(id).ok_or(TextError::UnknownId(id))?;
            for c in sym.chars() {
                let b = self
                    .byte_decoder
                    .get(&c)
                    .ok_or_else(|| TextError::InvalidRules(format!("symbol `{sym}` is not byte-level")))?;
                bytes.push(*b);
            }
        }
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }
}
