// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::text::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Left-to-right attention (GPT-style).
    Causal,
    /// Full attention, scored with one-token masking (BERT-style).
    Bidirectional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormStyle {
    /// `x + f(ln(x))`
    Pre,
    /// `ln(x + f(x))`
    Post,
}

/// Architecture description. Serialized as the model's `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: Family,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq: usize,
    pub norm_style: NormStyle,
    pub ln_epsilon: f64,
    pub tied_embeddings: bool,
    /// Required for pseudo-log-likelihood scoring of bidirectional models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_token_id: Option<TokenId>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let dims = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_seq", self.max_seq),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(EngineError::InvalidConfig(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(EngineError::InvalidConfig(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(self.ln_epsilon > 0.0 && self.ln_epsilon.is_finite()) {
            return Err(EngineError::InvalidConfig("ln_epsilon must be positive".into()));
        }
        if let Some(m) = self.mask_token_id {
            if m as usize >= self.vocab_size {
                return Err(EngineError::InvalidConfig(format!(
                    "mask_token_id {m} outside vocabulary"
                )));
            }
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Parameter names and shapes the engine requires, in canonical order.
    pub fn expected_tensors(&self) -> Vec<(String, Vec<usize>)> {
        let (d, f, v) = (self.d_model, self.d_ff, self.vocab_size);
        let mut out = vec![
            ("tok_emb".to_owned(), vec![v, d]),
            ("pos_emb".to_owned(), vec![self.max_seq, d]),
        ];
        for i in 0..self.n_layers {
            let p = |s: &str| format!("layer.{i}.{s}");
            out.push((p("ln1.gamma"), vec![d]));
            out.push((p("ln1.beta"), vec![d]));
            for proj in ["q", "k", "v", "o"] {
                out.push((p(&format!("attn.{proj}.weight")), vec![d, d]));
                out.push((p(&format!("attn.{proj}.bias")), vec![d]));
            }
            out.push((p("ln2.gamma"), vec![d]));
            out.push((p("ln2.beta"), vec![d]));
            out.push((p("mlp.fc_in.weight"), vec![d, f]));
            out.push((p("mlp.fc_in.bias"), vec![f]));
            out.push((p("mlp.fc_out.weight"), vec![f, d]));
            out.push((p("mlp.fc_out.bias"), vec![d]));
        }
        out.push(("ln_f.gamma".to_owned(), vec![d]));
        out.push(("ln_f.beta".to_owned(), vec![d]));
        if !self.tied_embeddings {
            out.push(("lm_head.weight".to_owned(), vec![v, d]));
        }
        out
    }
}
