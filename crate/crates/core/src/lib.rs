// SPDX-License-Identifier: MIT OR Apache-2.0

//! # medlab-core
//!
//! Causal mediation analysis over the internals of small transformer
//! language models, with the bias metrics and corpus tooling around it:
//!
//! - [`tensor_store`]: the `MLAB` binary weight container
//! - [`text`]: whitespace-vocabulary and byte-level BPE tokenizers
//! - [`engine`]: deterministic forward pass with neuron and attention-head hooks
//! - [`mediation`]: bias ratio `y(u)`, total / direct / indirect effects, top-neuron
//!   selection and per-layer profiles
//! - [`metrics`]: CrowS-style paired stereotype scores and SEAT association tests
//! - [`cda`]: counterfactual data augmentation by gendered word swapping
//! - [`report`]: plot-ready CSV output

pub mod cda;
pub mod engine;
pub mod mediation;
pub mod metrics;
pub mod report;
pub mod synth;
pub mod tensor_store;
pub mod text;

pub use cda::{augment_corpus, swap_text, AugmentMode, AugmentStats, CdaError, WordPairLexicon};
pub use engine::{ActivationTrace, EngineError, Family, InterventionSpec, Matrix, Model, ModelConfig};
pub use mediation::{
    EffectRecord, EffectReport, GenderClass, InterventionPair, MediationError, PromptInstance, Site,
    SiteReport,
};
pub use metrics::{CrowsResult, MetricsError, PermutationMode, Pooling, SeatResult};
pub use report::{emit_plot_data, PlotSchema, PlotSource, ReportError};
pub use tensor_store::{ArchiveError, TensorArchive, TensorEntry};
pub use text::{TextError, TokenId, Tokenizer};
