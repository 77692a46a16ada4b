// SPDX-License-Identifier: MIT OR Apache-2.0

//! Causal mediation of gender bias through neurons and attention heads.
//!
//! A prompt `u` is scored by a bias ratio `y(u)`. Interventions on the
//! input (set-gender, pronoun swap) and on internal sites (neuron values,
//! attention probabilities) are compared through the proportional change
//! `(y_intervened − y_null) / y_null`.

use thiserror::Error;

use crate::engine::EngineError;
use crate::text::TextError;

pub mod data;
pub mod effects;
pub mod prompts;
pub mod ranking;

pub use data::{load_professions, load_templates, load_winobias, WinoBiasRow};
pub use effects::{
    attention_direct_effect, attention_indirect_effect, attention_sweep, bias_ratio, neuron_direct_effect,
    neuron_indirect_effect, neuron_sweep, relative_change, sweep, total_effect, total_effects, EffectRecord,
    EffectReport, Site, SiteRecord, SiteReport, SiteSummary, SplitMean, TotalEffectSummary,
};
pub use prompts::{
    profession_grid, Candidates, GenderClass, GenderWords, InterventionPair, Orientation, PromptInstance,
    SkippedPrompt, PLACEHOLDER,
};
pub use ranking::{attention_weight_report, layer_profile, select_top_neurons, HeadWeights, LayerBucket};

#[derive(Debug, Error)]
pub enum MediationError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("bad candidate: {0}")]
    BadCandidate(String),
    #[error("bad template: {0}")]
    BadTemplate(String),
    #[error("subject tokens do not align in `{0}`")]
    SubjectAlignment(String),
    #[error("resubstitution error: {0}")]
    ResubstitutionError(String),
    #[error("prompt mismatch: {0}")]
    PromptMismatch(String),
    #[error("prompt {prompt}: {source}")]
    InPrompt {
        prompt: String,
        source: Box<MediationError>,
    },
    #[error("nothing to report")]
    EmptyReport,
    #[error("fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}
