// SPDX-License-Identifier: MIT OR Apache-2.0

//! Weight loading and the forward pass.

use rayon::prelude::*;

use super::{EngineError, Family, InterventionSpec, Matrix, ModelConfig, NormStyle};
use crate::tensor_store::{TensorArchive, TensorEntry};
use crate::text::TokenId;

#[derive(Debug, Clone)]
pub struct LayerNormWeights {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Linear {
    /// `[in, out]`; applied as `x · weight + bias`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    fn apply(&self, x: &Matrix) -> Matrix {
        let mut y = x.matmul(&self.weight);
        y.add_row_vector(&self.bias);
        y
    }
}

#[derive(Debug, Clone)]
pub struct LayerWeights {
    pub ln1: LayerNormWeights,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln2: LayerNormWeights,
    pub fc_in: Linear,
    pub fc_out: Linear,
}

/// Captured state of one forward pass.
#[derive(Debug, Clone)]
pub struct ActivationTrace {
    pub family: Family,
    /// `n_layers + 1` matrices of `[seq, d_model]`; index 0 is the embedding output.
    pub layer_outputs: Vec<Matrix>,
    /// `[layer][head]` post-softmax `[seq, seq]` probabilities as used.
    pub attention_probs: Vec<Vec<Matrix>>,
    /// Final-norm output, `[seq, d_model]`.
    pub final_hidden: Matrix,
    /// `[seq, vocab_size]`
    pub logits: Matrix,
}

impl ActivationTrace {
    pub fn seq_len(&self) -> usize {
        self.logits.rows()
    }

    /// Value of one layer-output unit.
    pub fn neuron(&self, layer: usize, position: usize, unit: usize) -> f64 {
        self.layer_outputs[layer][(position, unit)]
    }
}

/// Immutable model: configuration plus validated weights.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    tok_emb: Matrix,
    pos_emb: Matrix,
    layers: Vec<LayerWeights>,
    ln_f: LayerNormWeights,
    lm_head: Option<Matrix>,
}

fn take<'a>(archive: &'a TensorArchive, name: &str, dims: &[usize]) -> Result<&'a TensorEntry, EngineError> {
    let entry = archive
        .get(name)
        .ok_or_else(|| EngineError::WeightMismatch(format!("missing tensor `{name}`")))?;
    if entry.dims != dims {
        return Err(EngineError::WeightMismatch(format!(
            "tensor `{name}` has dims {:?}, expected {dims:?}",
            entry.dims
        )));
    }
    if let Some(bad) = entry.data.iter().find(|v| !v.is_finite()) {
        return Err(EngineError::WeightMismatch(format!(
            "tensor `{name}` contains non-finite value {bad}"
        )));
    }
    Ok(entry)
}

fn to_f64(data: &[f32]) -> Vec<f64> {
    data.iter().map(|&v| f64::from(v)).collect()
}

fn layer_norm(x: &Matrix, w: &LayerNormWeights, eps: f64) -> Matrix {
    let mut out = x.clone();
    let n = x.cols() as f64;
    for r in 0..x.rows() {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + eps).sqrt();
        for ((v, g), b) in row.iter_mut().zip(&w.gamma).zip(&w.beta) {
            *v = (*v - mean) * inv * g + b;
        }
    }
    out
}

/// Exact GELU: `x · Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Numerically stable `log softmax` of one row.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl Model {
    /// Validates `archive` against `config` and converts weights to `f64`.
    pub fn from_archive(config: ModelConfig, archive: &TensorArchive) -> Result<Self, EngineError> {
        config.validate()?;
        let (d, f, v) = (config.d_model, config.d_ff, config.vocab_size);
        let mat = |name: &str, rows: usize, cols: usize| -> Result<Matrix, EngineError> {
            let e = take(archive, name, &[rows, cols])?;
            Ok(Matrix::from_vec(rows, cols, to_f64(&e.data)))
        };
        let vec = |name: &str, len: usize| -> Result<Vec<f64>, EngineError> {
            Ok(to_f64(&take(archive, name, &[len])?.data))
        };
        let ln = |prefix: &str| -> Result<LayerNormWeights, EngineError> {
            Ok(LayerNormWeights {
                gamma: vec(&format!("{prefix}.gamma"), d)?,
                beta: vec(&format!("{prefix}.beta"), d)?,
            })
        };
        let linear = |prefix: &str, i: usize, o: usize| -> Result<Linear, EngineError> {
            Ok(Linear {
                weight: mat(&format!("{prefix}.weight"), i, o)?,
                bias: vec(&format!("{prefix}.bias"), o)?,
            })
        };

        let layers = (0..config.n_layers)
            .map(|i| {
                let p = format!("layer.{i}");
                Ok(LayerWeights {
                    ln1: ln(&format!("{p}.ln1"))?,
                    q: linear(&format!("{p}.attn.q"), d, d)?,
                    k: linear(&format!("{p}.attn.k"), d, d)?,
                    v: linear(&format!("{p}.attn.v"), d, d)?,
                    o: linear(&format!("{p}.attn.o"), d, d)?,
                    ln2: ln(&format!("{p}.ln2"))?,
                    fc_in: linear(&format!("{p}.mlp.fc_in"), d, f)?,
                    fc_out: linear(&format!("{p}.mlp.fc_out"), f, d)?,
                })
            })
            .collect::<Result<Vec<_>, EngineError>>()?;

        Ok(Self {
            tok_emb: mat("tok_emb", v, d)?,
            pos_emb: mat("pos_emb", config.max_seq, d)?,
            layers,
            ln_f: ln("ln_f")?,
            lm_head: if config.tied_embeddings {
                None
            } else {
                Some(mat("lm_head.weight", v, d)?)
            },
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layer(&self, i: usize) -> &LayerWeights {
        &self.layers[i]
    }

    pub fn tok_emb(&self) -> &Matrix {
        &self.tok_emb
    }

    pub fn pos_emb(&self) -> &Matrix {
        &self.pos_emb
    }

    pub fn ln_f(&self) -> &LayerNormWeights {
        &self.ln_f
    }

    /// Output projection `[vocab, d_model]` (the token embedding when tied).
    pub fn output_embedding(&self) -> &Matrix {
        self.lm_head.as_ref().unwrap_or(&self.tok_emb)
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<(), EngineError> {
        if ids.is_empty() {
            return Err(EngineError::TooShort { len: 0, min: 1 });
        }
        if ids.len() > self.config.max_seq {
            return Err(EngineError::SequenceTooLong {
                len: ids.len(),
                max: self.config.max_seq,
            });
        }
        if let Some(&bad) = ids.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(EngineError::BadToken(bad));
        }
        Ok(())
    }

    /// Multi-head self-attention of block `layer` over normalized input `h`.
    fn attention(
        &self,
        layer: usize,
        h: &Matrix,
        spec: &InterventionSpec,
        captured: &mut Vec<Matrix>,
    ) -> Matrix {
        let w = &self.layers[layer];
        let (q, k, v) = (w.q.apply(h), w.k.apply(h), w.v.apply(h));
        let seq = h.rows();
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let causal = self.config.family == Family::Causal;
        let mut merged = Matrix::zeros(seq, self.config.d_model);

        for head in 0..self.config.n_heads {
            let cols = head * dh..(head + 1) * dh;
            let probs = match spec.attn_replacement(layer, head) {
                Some(p) => p.clone(),
                None => {
                    let mut probs = Matrix::zeros(seq, seq);
                    for i in 0..seq {
                        let visible = if causal { i + 1 } else { seq };
                        let scores: Vec<f64> = (0..visible)
                            .map(|j| {
                                q.row(i)[cols.clone()]
                                    .iter()
                                    .zip(&k.row(j)[cols.clone()])
                                    .map(|(a, b)| a * b)
                                    .sum::<f64>()
                                    * scale
                            })
                            .collect();
                        probs.row_mut(i)[..visible].copy_from_slice(&softmax(&scores));
                    }
                    probs
                }
            };
            for i in 0..seq {
                for j in 0..seq {
                    let p = probs[(i, j)];
                    if p == 0.0 {
                        continue;
                    }
                    for c in cols.clone() {
                        merged[(i, c)] += p * v[(j, c)];
                    }
                }
            }
            captured.push(probs);
        }
        w.o.apply(&merged)
    }

    fn mlp(&self, layer: usize, h: &Matrix) -> Matrix {
        let w = &self.layers[layer];
        let mut a = w.fc_in.apply(h);
        a.map_inplace(gelu);
        w.fc_out.apply(&a)
    }

    fn block(&self, layer: usize, x: Matrix, spec: &InterventionSpec, captured: &mut Vec<Matrix>) -> Matrix {
        let eps = self.config.ln_epsilon;
        let w = &self.layers[layer];
        match self.config.norm_style {
            NormStyle::Pre => {
                let mut x = x;
                let a = self.attention(layer, &layer_norm(&x, &w.ln1, eps), spec, captured);
                x.add_assign(&a);
                let m = self.mlp(layer, &layer_norm(&x, &w.ln2, eps));
                x.add_assign(&m);
                x
            }
            NormStyle::Post => {
                let mut a = self.attention(layer, &x, spec, captured);
                a.add_assign(&x);
                let x = layer_norm(&a, &w.ln1, eps);
                let mut m = self.mlp(layer, &x);
                m.add_assign(&x);
                layer_norm(&m, &w.ln2, eps)
            }
        }
    }

    fn apply_neuron_sets(x: &mut Matrix, layer: usize, spec: &InterventionSpec) {
        for (pos, unit, value) in spec.neuron_sets(layer) {
            x[(pos, unit)] = value;
        }
    }

    /// Runs blocks `start..n_layers` from layer output `start`, then the head.
    fn run_from(
        &self,
        start: usize,
        mut x: Matrix,
        spec: &InterventionSpec,
        layer_outputs: &mut Vec<Matrix>,
        attention_probs: &mut Vec<Vec<Matrix>>,
    ) -> Result<(Matrix, Matrix), EngineError> {
        for layer in start..self.config.n_layers {
            let mut heads = Vec::with_capacity(self.config.n_heads);
            x = self.block(layer, x, spec, &mut heads);
            Self::apply_neuron_sets(&mut x, layer + 1, spec);
            if !x.all_finite() {
                return Err(EngineError::NumericError(format!(
                    "non-finite activation in output of layer {}",
                    layer + 1
                )));
            }
            attention_probs.push(heads);
            layer_outputs.push(x.clone());
        }
        let final_hidden = layer_norm(&x, &self.ln_f, self.config.ln_epsilon);
        let logits = final_hidden.matmul_t(self.output_embedding());
        if !logits.all_finite() {
            return Err(EngineError::NumericError("non-finite logits".into()));
        }
        Ok((final_hidden, logits))
    }

    /// Full forward pass with interventions applied at their sites.
    pub fn forward_trace(
        &self,
        ids: &[TokenId],
        spec: &InterventionSpec,
    ) -> Result<ActivationTrace, EngineError> {
        self.check_ids(ids)?;
        spec.validate(&self.config, ids.len())?;

        let mut x = Matrix::zeros(ids.len(), self.config.d_model);
        for (t, &id) in ids.iter().enumerate() {
            for ((o, e), p) in x
                .row_mut(t)
                .iter_mut()
                .zip(self.tok_emb.row(id as usize))
                .zip(self.pos_emb.row(t))
            {
                *o = e + p;
            }
        }
        Self::apply_neuron_sets(&mut x, 0, spec);

        let mut layer_outputs = vec![x.clone()];
        let mut attention_probs = Vec::with_capacity(self.config.n_layers);
        let (final_hidden, logits) = self.run_from(0, x, spec, &mut layer_outputs, &mut attention_probs)?;
        Ok(ActivationTrace {
            family: self.config.family,
            layer_outputs,
            attention_probs,
            final_hidden,
            logits,
        })
    }

    pub fn forward(&self, ids: &[TokenId]) -> Result<ActivationTrace, EngineError> {
        self.forward_trace(ids, &InterventionSpec::none())
    }

    /// Recomputes the network from a given layer output onward, with no
    /// interventions. `layer` 0 means `residual` replaces the embedding output.
    pub fn resume_from(&self, layer: usize, residual: Matrix) -> Result<Matrix, EngineError> {
        if layer > self.config.n_layers || residual.cols() != self.config.d_model {
            return Err(EngineError::BadSite(format!(
                "cannot resume from layer {layer} with a {:?} residual",
                residual.shape()
            )));
        }
        let mut outs = Vec::new();
        let mut probs = Vec::new();
        let (_, logits) = self.run_from(layer, residual, &InterventionSpec::none(), &mut outs, &mut probs)?;
        Ok(logits)
    }

    /// Sum of per-token conditional log-probabilities.
    ///
    /// Causal models use `Σ_{t≥1} log p(x_t | x_<t)` from one pass;
    /// bidirectional models mask each position in turn.
    pub fn pseudo_log_likelihood(&self, ids: &[TokenId]) -> Result<f64, EngineError> {
        if ids.len() < 2 {
            return Err(EngineError::TooShort {
                len: ids.len(),
                min: 2,
            });
        }
        match self.config.family {
            Family::Causal => {
                let trace = self.forward(ids)?;
                Ok((1..ids.len())
                    .map(|t| log_softmax(trace.logits.row(t - 1))[ids[t] as usize])
                    .sum())
            }
            Family::Bidirectional => {
                let mask = self.config.mask_token_id.ok_or(EngineError::NoMaskToken)?;
                self.check_ids(ids)?;
                let terms = (0..ids.len())
                    .into_par_iter()
                    .map(|t| {
                        let mut masked = ids.to_vec();
                        masked[t] = mask;
                        let trace = self.forward(&masked)?;
                        Ok(log_softmax(trace.logits.row(t))[ids[t] as usize])
                    })
                    .collect::<Result<Vec<f64>, EngineError>>()?;
                Ok(terms.iter().sum())
            }
        }
    }

    /// Log-probability of `continuation` following `prompt` under `spec`.
    ///
    /// One pass over `prompt ++ continuation[..n-1]`; the intervention must be
    /// sized for that sequence.
    pub fn continuation_log_prob(
        &self,
        prompt: &[TokenId],
        continuation: &[TokenId],
        spec: &InterventionSpec,
    ) -> Result<f64, EngineError> {
        if self.config.family != Family::Causal {
            return Err(EngineError::WrongFamily);
        }
        if prompt.is_empty() || continuation.is_empty() {
            return Err(EngineError::TooShort { len: 0, min: 1 });
        }
        let mut seq = prompt.to_vec();
        seq.extend_from_slice(&continuation[..continuation.len() - 1]);
        let trace = self.forward_trace(&seq, spec)?;
        Ok(continuation
            .iter()
            .enumerate()
            .map(|(i, &tok)| log_softmax(trace.logits.row(prompt.len() - 1 + i))[tok as usize])
            .sum())
    }
}

/// Softmax of the last-position logits of a causal trace.
pub fn next_token_distribution(trace: &ActivationTrace) -> Result<Vec<f64>, EngineError> {
    if trace.family != Family::Causal {
        return Err(EngineError::WrongFamily);
    }
    Ok(softmax(trace.logits.row(trace.seq_len() - 1)))
}
