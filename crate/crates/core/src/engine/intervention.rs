// SPDX-License-Identifier: MIT OR Apache-2.0

//! Declarative interventions applied during a forward pass.

use super::{EngineError, Family, Matrix, ModelConfig};

/// Row sums of a replacement attention matrix must be within this of 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Overwrite one scalar of a layer output. `layer` 0 is the embedding
    /// output; `layer` i ≥ 1 is the residual output of block i − 1.
    NeuronSet {
        layer: usize,
        position: usize,
        unit: usize,
        value: f64,
    },
    /// Substitute the post-softmax `[seq, seq]` probabilities of one head.
    AttnReplace {
        layer: usize,
        head: usize,
        probs: Matrix,
    },
}

/// A set of actions; the empty spec is a plain forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterventionSpec {
    pub actions: Vec<Action>,
}

impl InterventionSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn neuron(layer: usize, position: usize, unit: usize, value: f64) -> Self {
        Self {
            actions: vec![Action::NeuronSet {
                layer,
                position,
                unit,
                value,
            }],
        }
    }

    pub fn attention(layer: usize, head: usize, probs: Matrix) -> Self {
        Self {
            actions: vec![Action::AttnReplace { layer, head, probs }],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(&mut self, action: Action) {
        self.actions.push(action);
    }

    pub(crate) fn validate(&self, config: &ModelConfig, seq: usize) -> Result<(), EngineError> {
        for action in &self.actions {
            match action {
                Action::NeuronSet {
                    layer,
                    position,
                    unit,
                    value,
                } => {
                    if *layer > config.n_layers || *position >= seq || *unit >= config.d_model {
                        return Err(EngineError::BadSite(format!(
                            "neuron (layer {layer}, position {position}, unit {unit}) outside \
                             {} layers x {seq} positions x {} units",
                            config.n_layers + 1,
                            config.d_model
                        )));
                    }
                    if !value.is_finite() {
                        return Err(EngineError::BadSite(format!("non-finite value {value}")));
                    }
                }
                Action::AttnReplace { layer, head, probs } => {
                    if *layer >= config.n_layers || *head >= config.n_heads {
                        return Err(EngineError::BadSite(format!(
                            "head {layer}-{head} outside {} layers x {} heads",
                            config.n_layers, config.n_heads
                        )));
                    }
                    if probs.shape() != (seq, seq) {
                        return Err(EngineError::BadSite(format!(
                            "replacement for head {layer}-{head} has shape {:?}, expected ({seq}, {seq})",
                            probs.shape()
                        )));
                    }
                    let causal = config.family == Family::Causal;
                    for r in 0..seq {
                        let row = probs.row(r);
                        if causal && row[r + 1..].iter().any(|&p| p != 0.0) {
                            return Err(EngineError::BadSite(format!(
                                "replacement row {r} for causal head {layer}-{head} attends to future positions"
                            )));
                        }
                        let sum: f64 = row.iter().sum();
                        if row.iter().any(|p| !p.is_finite() || *p < 0.0)
                            || (sum - 1.0).abs() > ROW_SUM_TOLERANCE
                        {
                            return Err(EngineError::BadSite(format!(
                                "replacement row {r} for head {layer}-{head} is not a distribution (sum {sum})"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub(crate) fn neuron_sets(&self, layer: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.actions.iter().filter_map(move |a| match a {
            Action::NeuronSet {
                layer: l,
                position,
                unit,
                value,
            } if *l == layer => Some((*position, *unit, *value)),
            _ => None,
        })
    }

    pub(crate) fn attn_replacement(&self, layer: usize, head: usize) -> Option<&Matrix> {
        // Last action for a head wins.
        self.actions.iter().rev().find_map(|a| match a {
            Action::AttnReplace {
                layer: l,
                head: h,
                probs,
            } if *l == layer && *h == head => Some(probs),
            _ => None,
        })
    }
}
