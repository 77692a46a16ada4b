// SPDX-License-Identifier: MIT OR Apache-2.0

//! Paired-sentence stereotype scores and sentence-embedding association tests.

use thiserror::Error;

use crate::engine::EngineError;
use crate::text::TextError;

pub mod crows;
pub mod seat;

pub use crows::{
    crows_score, load_crows, score_from_plls, CrowsResult, PairScore, SentencePair, TIE_TOLERANCE,
};
pub use seat::{
    association_score, cosine, effect_size, embed_sentence, load_seat, permutation_pvalue, seat_test,
    AssociationSets, PermutationMode, Pooling, SeatResult,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sentence `{0}` has no tokens")]
    EmptyInput(String),
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("association scores have zero variance")]
    ZeroVariance,
    #[error("exact permutation test needs |X| = |Y|, got {x} and {y}")]
    UnequalSets { x: usize, y: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}
