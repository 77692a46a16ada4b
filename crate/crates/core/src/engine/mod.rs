// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic transformer forward pass with capture and intervention hooks.
//!
//! Computation is in `f64` regardless of the `f32` storage format, so
//! intervention identities hold exactly.

mod config;
mod intervention;
mod matrix;
mod model;

use thiserror::Error;

pub use config::{Family, ModelConfig, NormStyle};
pub use intervention::{Action, InterventionSpec, ROW_SUM_TOLERANCE};
pub use matrix::Matrix;
pub use model::{
    gelu, log_softmax, next_token_distribution, softmax, ActivationTrace, LayerNormWeights, LayerWeights,
    Linear, Model,
};

use crate::text::TokenId;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("weights do not match config: {0}")]
    WeightMismatch(String),
    #[error("bad intervention site: {0}")]
    BadSite(String),
    #[error("numeric error: {0}")]
    NumericError(String),
    #[error("operation requires a causal-family model")]
    WrongFamily,
    #[error("sequence of length {len} is too short (need at least {min})")]
    TooShort { len: usize, min: usize },
    #[error("sequence of length {len} exceeds max_seq {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {0} outside the model vocabulary")]
    BadToken(TokenId),
    #[error("bidirectional model has no mask token")]
    NoMaskToken,
}
