// SPDX-License-Identifier: MIT OR Apache-2.0

//! Counterfactual data augmentation by swapping gendered word pairs.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Built-in pair list. `him` is absent: it would pair with `her`, which
/// already pairs with `his`.
pub const DEFAULT_LEXICON: &str = include_str!("../data/gender_pairs.tsv");

const CHUNK_LINES: usize = 4096;

#[derive(Debug, Error)]
pub enum CdaError {
    #[error("lexicon line {line}: {message}")]
    InvalidLexicon { line: usize, message: String },
    #[error("stream error: {0}")]
    Stream(#[from] io::Error),
}

/// Lowercase word pairs; `swap(swap(w)) == w` and no word maps to itself.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordPairLexicon {
    map: HashMap<String, String>,
}

impl WordPairLexicon {
    /// `word_a<TAB>word_b` per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, CdaError> {
        let mut lex = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| CdaError::InvalidLexicon { line: i + 1, message };
            let (a, b) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected `word_a<TAB>word_b`".into()))?;
            lex.insert(a.trim(), b.trim()).map_err(bad)?;
        }
        Ok(lex)
    }

    pub fn default_pairs() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }

    /// Adds `a ↔ b`, keeping the map an involution.
    pub fn insert(&mut self, a: &str, b: &str) -> Result<(), String> {
        let (a, b) = (a.to_lowercase(), b.to_lowercase());
        let single = |w: &str| !w.is_empty() && w.chars().all(char::is_alphanumeric);
        if !single(&a) || !single(&b) {
            return Err(format!("`{a}` / `{b}`: entries must be single words"));
        }
        if a == b {
            return Err(format!("`{a}` maps to itself"));
        }
        for (w, other) in [(&a, &b), (&b, &a)] {
            if let Some(existing) = self.map.get(w) {
                if existing != other {
                    return Err(format!("`{w}` already pairs with `{existing}`"));
                }
            }
        }
        self.map.insert(a.clone(), b.clone());
        self.map.insert(b, a);
        Ok(())
    }

    pub fn counterpart(&self, word: &str) -> Option<&str> {
        self.map.get(word).map(String::as_str)
    }

    /// Number of words (twice the number of pairs).
    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Casing {
    Lower,
    Capitalized,
    Upper,
    Mixed,
}

fn casing(word: &str) -> Casing {
    let mut chars = word.chars();
    let first = chars.next().is_some_and(char::is_uppercase);
    let rest: Vec<char> = chars.collect();
    let rest_lower = rest.iter().all(|c| !c.is_uppercase());
    let rest_upper = rest.iter().all(|c| !c.is_lowercase());
    match (first, rest_lower, rest_upper) {
        (false, true, _) => Casing::Lower,
        (true, true, _) => Casing::Capitalized,
        (true, false, true) => Casing::Upper,
        _ => Casing::Mixed,
    }
}

fn apply_casing(word: &str, casing: Casing) -> String {
    match casing {
        Casing::Lower | Casing::Mixed => word.to_owned(),
        Casing::Upper => word.to_uppercase(),
        Casing::Capitalized => {
            let mut chars = word.chars();
            chars
                .next()
                .map(|c| c.to_uppercase().chain(chars).collect())
                .unwrap_or_default()
        }
    }
}

/// One replaced word, for statistics.
struct Swap {
    word: String,
    mixed: bool,
}

fn swap_collect(text: &str, lexicon: &WordPairLexicon) -> (String, Vec<Swap>) {
    let mut out = String::with_capacity(text.len());
    let mut swaps = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let word_len: usize = rest
            .chars()
            .take_while(|c| c.is_alphanumeric())
            .map(char::len_utf8)
            .sum();
        if word_len == 0 {
            let gap: usize = rest
                .chars()
                .take_while(|c| !c.is_alphanumeric())
                .map(char::len_utf8)
                .sum();
            out.push_str(&rest[..gap]);
            rest = &rest[gap..];
            continue;
        }
        let word = &rest[..word_len];
        let lower = word.to_lowercase();
        match lexicon.counterpart(&lower) {
            Some(repl) => {
                let c = casing(word);
                out.push_str(&apply_casing(repl, c));
                swaps.push(Swap {
                    word: lower,
                    mixed: c == Casing::Mixed,
                });
            }
            None => out.push_str(word),
        }
        rest = &rest[word_len..];
    }
    (out, swaps)
}

/// Replaces every whole word found in `lexicon`, keeping lower, Capitalized
/// and ALL-CAPS forms. Words in any other casing get the lowercase counterpart.
pub fn swap_text(text: &str, lexicon: &WordPairLexicon) -> String {
    swap_collect(text, lexicon).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentMode {
    /// Each line, followed by its swapped form when that differs.
    TwoSided,
    /// Swapped lines only.
    Replace,
}

impl std::str::FromStr for AugmentMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "two-sided" => Ok(Self::TwoSided),
            "replace" => Ok(Self::Replace),
            other => Err(format!("unknown mode `{other}` (expected two-sided or replace)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AugmentStats {
    pub lines_read: usize,
    pub lines_written: usize,
    pub lines_swapped: usize,
    /// Keyed by the lowercase source word.
    pub swap_counts: BTreeMap<String, usize>,
    /// Swapped words whose casing was none of the three preserved patterns.
    pub mixed_case: usize,
}

fn flush_chunk<W: Write>(
    lines: &mut Vec<String>,
    out: &mut W,
    lexicon: &WordPairLexicon,
    mode: AugmentMode,
    stats: &mut AugmentStats,
) -> io::Result<()> {
    let swapped: Vec<(String, Vec<Swap>)> = lines.par_iter().map(|l| swap_collect(l, lexicon)).collect();
    for (line, (new, swaps)) in lines.iter().zip(swapped) {
        stats.lines_read += 1;
        let changed = new != *line;
        stats.lines_swapped += usize::from(changed);
        for s in swaps {
            *stats.swap_counts.entry(s.word).or_default() += 1;
            stats.mixed_case += usize::from(s.mixed);
        }
        let emit: &[&str] = match (mode, changed) {
            (AugmentMode::TwoSided, true) => &[line, &new],
            (AugmentMode::TwoSided, false) => &[line],
            (AugmentMode::Replace, _) => &[&new],
        };
        for l in emit {
            out.write_all(l.as_bytes())?;
            out.write_all(b"\n")?;
            stats.lines_written += 1;
        }
    }
    lines.clear();
    Ok(())
}

/// Streams `input` to `output` line by line; every emitted line ends in `\n`.
pub fn augment_corpus<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    lexicon: &WordPairLexicon,
    mode: AugmentMode,
) -> Result<AugmentStats, CdaError> {
    let mut stats = AugmentStats::default();
    let mut chunk = Vec::with_capacity(CHUNK_LINES);
    for line in input.lines() {
        chunk.push(line?);
        if chunk.len() == CHUNK_LINES {
            flush_chunk(&mut chunk, &mut output, lexicon, mode, &mut stats)?;
        }
    }
    flush_chunk(&mut chunk, &mut output, lexicon, mode, &mut stats)?;
    output.flush()?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex() -> WordPairLexicon {
        WordPairLexicon::default_pairs()
    }

    #[test]
    fn casing_preserved() {
        let l = lex();
        assert_eq!(
            swap_text("Her most significant piece of work", &l),
            "His most significant piece of work"
        );
        assert_eq!(swap_text("HE said she was", &l), "SHE said he was");
        assert_eq!(swap_text("", &l), "");
        assert_eq!(swap_text("hE", &l), "she");
    }

    #[test]
    fn whole_words_only() {
        let l = lex();
        assert_eq!(
            swap_text("mother, brotherhood; other", &l),
            "father, brotherhood; other"
        );
        assert_eq!(swap_text("she's the man.", &l), "he's the woman.");
    }

    #[test]
    fn lexicon_validation() {
        assert!(WordPairLexicon::parse("he\tshe\nhim\tshe\n").is_err());
        assert!(WordPairLexicon::parse("he\the\n").is_err());
        assert!(WordPairLexicon::parse("he she\n").is_err());
        assert!(
            WordPairLexicon::parse("# pairs\nHe\tShe\n\n")
                .unwrap()
                .counterpart("she")
                == Some("he")
        );
        assert_eq!(lex().len() % 2, 0);
    }

    #[test]
    fn corpus_modes() {
        let l = lex();
        let input = "no pairs here\nshe left\n";
        let mut out = Vec::new();
        let stats = augment_corpus(input.as_bytes(), &mut out, &l, AugmentMode::TwoSided).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "no pairs here\nshe left\nhe left\n"
        );
        assert_eq!(
            (stats.lines_read, stats.lines_swapped, stats.lines_written),
            (2, 1, 3)
        );
        assert_eq!(stats.swap_counts.get("she"), Some(&1));

        let mut once = Vec::new();
        augment_corpus(input.as_bytes(), &mut once, &l, AugmentMode::Replace).unwrap();
        let mut twice = Vec::new();
        augment_corpus(&once[..], &mut twice, &l, AugmentMode::Replace).unwrap();
        assert_eq!(twice, input.as_bytes());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("two-sided".parse::<AugmentMode>().unwrap(), AugmentMode::TwoSided);
        assert!("both".parse::<AugmentMode>().is_err());
    }

    fn word() -> impl Strategy<Value = String> {
        let l = lex();
        let mut words: Vec<String> = l.map.keys().cloned().collect();
        words.sort();
        words.extend(["the", "mother", "Other", "x1", "élan"].map(String::from));
        prop::sample::select(words).prop_flat_map(|w| {
            prop_oneof![
                Just(w.clone()),
                Just(w.to_uppercase()),
                Just(apply_casing(&w, Casing::Capitalized))
            ]
        })
    }

    proptest! {
        #[test]
        fn involution(words in prop::collection::vec((word(), "[ ,.;!?'\t-]{1,3}"), 0..20)) {
            let l = lex();
            let text: String = words.iter().flat_map(|(w, s)| [w.as_str(), s.as_str()]).collect();
            let once = swap_text(&text, &l);
            prop_assert_eq!(swap_text(&once, &l), text.clone());
            prop_assert_eq!(once.split_whitespace().count(), text.split_whitespace().count());
        }
    }
}
