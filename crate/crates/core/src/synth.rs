// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded random models for tests, fixtures and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{Family, Model, ModelConfig, NormStyle};
use crate::tensor_store::{TensorArchive, TensorEntry};

/// A 2-layer, 2-head, `d_model` 4 model with a 16-token vocabulary.
/// Bidirectional configs use token 1 as the mask.
pub fn tiny_config(family: Family) -> ModelConfig {
    ModelConfig {
        family,
        n_layers: 2,
        n_heads: 2,
        d_model: 4,
        d_ff: 8,
        vocab_size: 16,
        max_seq: 16,
        norm_style: match family {
            Family::Causal => NormStyle::Pre,
            Family::Bidirectional => NormStyle::Post,
        },
        ln_epsilon: 1e-5,
        tied_embeddings: family == Family::Causal,
        mask_token_id: (family == Family::Bidirectional).then_some(1),
    }
}

/// Every tensor `config` requires, filled from a seeded RNG. Projection
/// weights are scaled by `1/sqrt(fan_in)`; norm gains sit near 1.
pub fn random_archive(config: &ModelConfig, seed: u64) -> TensorArchive {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut archive = TensorArchive::new();
    for (name, dims) in config.expected_tensors() {
        let n: usize = dims.iter().product();
        let data: Vec<f32> = if name.ends_with(".gamma") {
            (0..n).map(|_| 1.0 + rng.random_range(-0.2..0.2)).collect()
        } else if name.ends_with(".beta") || name.ends_with(".bias") {
            (0..n).map(|_| rng.random_range(-0.1..0.1)).collect()
        } else if name == "tok_emb" || name == "pos_emb" || name == "lm_head.weight" {
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
        } else {
            let scale = 1.0 / (dims[0] as f32).sqrt();
            (0..n)
                .map(|_| rng.random_range(-1.0..1.0) * scale * 1.5)
                .collect()
        };
        archive
            .push(TensorEntry::new(name, dims, data))
            .expect("generated tensors are consistent");
    }
    archive
}

pub fn random_model(config: &ModelConfig, seed: u64) -> Model {
    Model::from_archive(config.clone(), &random_archive(config, seed)).expect("valid synthetic model")
}

/// Archive whose logits are identically zero: all output-side parameters are
/// zero so every position predicts the uniform distribution.
pub fn uniform_archive(config: &ModelConfig, seed: u64) -> TensorArchive {
    let mut cfg = config.clone();
    cfg.tied_embeddings = false;
    let base = random_archive(&cfg, seed);
    let mut archive = TensorArchive::new();
    for e in base.entries() {
        let mut e = e.clone();
        if e.name == "lm_head.weight" {
            e.data.iter_mut().for_each(|v| *v = 0.0);
        }
        archive.push(e).expect("consistent");
    }
    archive
}

/// `(config, model)` with all-zero logits at every position.
pub fn uniform_model(config: &ModelConfig, seed: u64) -> (ModelConfig, Model) {
    let mut cfg = config.clone();
    cfg.tied_embeddings = false;
    let model = Model::from_archive(cfg.clone(), &uniform_archive(&cfg, seed)).expect("valid");
    (cfg, model)
}
