// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sentence-level association test: effect size and permutation p-value.

use std::path::Path;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::engine::{Family, Model};
use crate::text::Tokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    First,
    Last,
    Mean,
}

impl Pooling {
    /// First token for bidirectional models, last for causal ones.
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Bidirectional => Self::First,
            Family::Causal => Self::Last,
        }
    }
}

/// Pooled final-norm hidden states of `sentence`.
pub fn embed_sentence(
    model: &Model,
    tokenizer: &Tokenizer,
    sentence: &str,
    pooling: Pooling,
) -> Result<Vec<f64>, MetricsError> {
    let ids = tokenizer.encode(sentence)?;
    if ids.is_empty() {
        return Err(MetricsError::EmptyInput(sentence.to_owned()));
    }
    let h = model.forward(&ids)?.final_hidden;
    Ok(match pooling {
        Pooling::First => h.row(0).to_vec(),
        Pooling::Last => h.row(h.rows() - 1).to_vec(),
        Pooling::Mean => {
            let n = h.rows() as f64;
            (0..h.cols())
                .map(|c| (0..h.rows()).map(|r| h[(r, c)]).sum::<f64>() / n)
                .collect()
        }
    })
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MetricsError::ZeroNorm);
    }
    Ok(dot / (na * nb))
}

fn mean_cosine(w: &[f64], set: &[Vec<f64>]) -> Result<f64, MetricsError> {
    if set.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    Ok(set.iter().map(|v| cosine(w, v)).sum::<Result<f64, _>>()? / set.len() as f64)
}

/// `s(w, A, B)`: mean cosine to `A` minus mean cosine to `B`.
pub fn association_score(w: &[f64], a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, MetricsError> {
    Ok(mean_cosine(w, a)? - mean_cosine(w, b)?)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `(mean s(X) − mean s(Y)) / σ(s(X ∪ Y))` with the population deviation.
pub fn effect_size(sx: &[f64], sy: &[f64]) -> Result<f64, MetricsError> {
    if sx.is_empty() || sy.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let all: Vec<f64> = sx.iter().chain(sy).copied().collect();
    let m = mean(&all);
    let sd = (all.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / all.len() as f64).sqrt();
    let scale = all.iter().fold(0.0f64, |acc, s| acc.max(s.abs()));
    // Equal scores can leave rounding residue in the mean.
    if sd <= 1e-12 * scale {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((mean(sx) - mean(sy)) / sd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum PermutationMode {
    /// All `C(|X|+|Y|, |X|)` repartitions; needs `|X| = |Y|`.
    Exact,
    /// `n` seeded random repartitions plus the observed one.
    Sampled { n: usize, seed: u64 },
}

/// One-sided permutation p-value of `Σ s(X) − Σ s(Y)`.
///
/// Since `Σ s(X') − Σ s(Y') = 2 Σ s(X') − Σ s(X ∪ Y)`, partitions are compared
/// on `Σ s(X')` alone, summed in index order so the observed partition
/// reproduces its own statistic bit for bit.
pub fn permutation_pvalue(sx: &[f64], sy: &[f64], mode: PermutationMode) -> Result<f64, MetricsError> {
    if sx.is_empty() || sy.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let all: Vec<f64> = sx.iter().chain(sy).copied().collect();
    let k = sx.len();
    let subset_sum = |idx: &[usize]| idx.iter().map(|&i| all[i]).sum::<f64>();
    let observed = subset_sum(&(0..k).collect::<Vec<_>>());
    let slack = 1e-12 * all.iter().map(|s| s.abs()).sum::<f64>();
    let at_least = |s: f64| s >= observed - slack;
    match mode {
        PermutationMode::Exact => {
            if sx.len() != sy.len() {
                return Err(MetricsError::UnequalSets {
                    x: sx.len(),
                    y: sy.len(),
                });
            }
            let (hits, total) = (0..all.len())
                .combinations(k)
                .par_bridge()
                .map(|idx| (usize::from(at_least(subset_sum(&idx))), 1usize))
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            Ok(hits as f64 / total as f64)
        }
        PermutationMode::Sampled { n, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx: Vec<usize> = (0..all.len()).collect();
            let mut hits = 0usize;
            for _ in 0..n {
                idx.shuffle(&mut rng);
                let mut draw = idx[..k].to_vec();
                draw.sort_unstable();
                hits += usize::from(at_least(subset_sum(&draw)));
            }
            Ok((1 + hits) as f64 / (n + 1) as f64)
        }
    }
}

/// Targets `x`, `y` and attributes `a`, `b` as raw sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssociationSets {
    pub name: String,
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub a: Vec<String>,
    pub b: Vec<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SeatSet {
    Plain(Vec<String>),
    Published { examples: Vec<String> },
}

impl SeatSet {
    fn into_vec(self) -> Vec<String> {
        match self {
            Self::Plain(v) | Self::Published { examples: v } => v,
        }
    }
}

#[derive(Deserialize)]
struct SeatFile {
    targ1: SeatSet,
    targ2: SeatSet,
    attr1: SeatSet,
    attr2: SeatSet,
}

/// JSON with `targ1`, `targ2`, `attr1`, `attr2`, each either a sentence array
/// or an object with an `examples` array.
pub fn load_seat(path: impl AsRef<Path>) -> Result<AssociationSets, MetricsError> {
    let path = path.as_ref();
    let err = |message: String| MetricsError::Parse {
        path: path.display().to_string(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let file: SeatFile = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    let sets = AssociationSets {
        name: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        x: file.targ1.into_vec(),
        y: file.targ2.into_vec(),
        a: file.attr1.into_vec(),
        b: file.attr2.into_vec(),
    };
    if [&sets.x, &sets.y, &sets.a, &sets.b].iter().any(|s| s.is_empty()) {
        return Err(err("all four sets must be non-empty".into()));
    }
    Ok(sets)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeatResult {
    pub name: String,
    pub effect_size: f64,
    pub p_value: f64,
    pub pooling: Pooling,
    pub mode: PermutationMode,
    pub x_scores: Vec<f64>,
    pub y_scores: Vec<f64>,
}

/// Embeds every sentence, then scores effect size and p-value.
pub fn seat_test(
    model: &Model,
    tokenizer: &Tokenizer,
    sets: &AssociationSets,
    pooling: Pooling,
    mode: PermutationMode,
) -> Result<SeatResult, MetricsError> {
    let embed = |list: &[String]| -> Result<Vec<Vec<f64>>, MetricsError> {
        list.par_iter()
            .map(|s| embed_sentence(model, tokenizer, s, pooling))
            .collect()
    };
    let (a, b) = (embed(&sets.a)?, embed(&sets.b)?);
    let scores = |list: &[String]| -> Result<Vec<f64>, MetricsError> {
        embed(list)?
            .iter()
            .map(|w| association_score(w, &a, &b))
            .collect()
    };
    let (x_scores, y_scores) = (scores(&sets.x)?, scores(&sets.y)?);
    Ok(SeatResult {
        name: sets.name.clone(),
        effect_size: effect_size(&x_scores, &y_scores)?,
        p_value: permutation_pvalue(&x_scores, &y_scores, mode)?,
        pooling,
        mode,
        x_scores,
        y_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cosines() {
        let a = vec![vec![1.0, 0.0]];
        let b = vec![vec![0.0, 1.0]];
        assert_eq!(association_score(&[1.0, 0.0], &a, &b).unwrap(), 1.0);
        assert_eq!(association_score(&[3.0, 3.0], &a, &a).unwrap(), 0.0);
        assert_eq!(association_score(&[0.0, 2.0], &a, &a).unwrap(), 0.0);
        assert!(matches!(
            association_score(&[0.0, 0.0], &a, &b),
            Err(MetricsError::ZeroNorm)
        ));
    }

    #[test]
    fn effect_size_cases() {
        assert_eq!(effect_size(&[0.1, 0.3], &[0.1, 0.3]).unwrap(), 0.0);
        assert!(matches!(
            effect_size(&[0.1, 0.1, 0.1], &[0.1]),
            Err(MetricsError::ZeroVariance)
        ));
        // scores {1, -1}: mean 0, population sd 1.
        assert_eq!(effect_size(&[1.0], &[-1.0]).unwrap(), 2.0);
    }

    #[test]
    fn two_item_exact_p() {
        assert_eq!(
            permutation_pvalue(&[0.4], &[0.1], PermutationMode::Exact).unwrap(),
            0.5
        );
        assert!(matches!(
            permutation_pvalue(&[0.4, 0.2], &[0.1], PermutationMode::Exact),
            Err(MetricsError::UnequalSets { .. })
        ));
    }

    #[test]
    fn extreme_statistic() {
        let p = permutation_pvalue(&[5.0, 4.0, 3.0], &[0.0, 1.0, 2.0], PermutationMode::Exact).unwrap();
        assert_eq!(p, 1.0 / 20.0);
    }

    #[test]
    fn sampled_is_seeded() {
        let (x, y) = ([0.3, 0.1, 0.5, 0.2], [0.0, 0.25, -0.1, 0.05]);
        let m = PermutationMode::Sampled { n: 500, seed: 7 };
        let p = permutation_pvalue(&x, &y, m).unwrap();
        assert_eq!(p, permutation_pvalue(&x, &y, m).unwrap());
        assert!(p >= 1.0 / 501.0);
    }

    #[test]
    fn published_schema() {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(
            f,
            r#"{{"targ1": {{"category": "Male", "examples": ["He is here."]}}, "targ2": ["She is here."],
                "attr1": {{"category": "Career", "examples": ["office"]}}, "attr2": ["home"]}}"#
        )
        .unwrap();
        let s = load_seat(f.path()).unwrap();
        assert_eq!(s.x, vec!["He is here."]);
        assert_eq!(s.b, vec!["home"]);
    }
}
