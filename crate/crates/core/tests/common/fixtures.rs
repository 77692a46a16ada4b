// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hand-weight models and randomized prompt pairs for integration tests.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use medlab_core::engine::{Family, ModelConfig, NormStyle};
use medlab_core::mediation::{Candidates, GenderClass, InterventionPair, PromptInstance};
use medlab_core::{TensorArchive, TensorEntry};

/// 1 layer, 2 heads, `d_model` 4, vocabulary 8.
pub fn hand_config(family: Family, norm_style: NormStyle, tied: bool) -> ModelConfig {
    ModelConfig {
        family,
        n_layers: 1,
        n_heads: 2,
        d_model: 4,
        d_ff: 8,
        vocab_size: 8,
        max_seq: 8,
        norm_style,
        ln_epsilon: 1e-5,
        tied_embeddings: tied,
        mask_token_id: (family == Family::Bidirectional).then_some(0),
    }
}

/// Deterministic weights from a closed formula: multiples of 1/16 in
/// [-1, 1), norm gains in [0.75, 1.25).
pub fn hand_archive(config: &ModelConfig) -> TensorArchive {
    let mut ar = TensorArchive::new();
    for (k, (name, dims)) in config.expected_tensors().into_iter().enumerate() {
        let n: usize = dims.iter().product();
        let data = (0..n)
            .map(|i| {
                let step = ((i * 37 + k * 11 + 5) % 32) as f32 / 16.0 - 1.0;
                if name.ends_with(".gamma") {
                    1.0 + step / 4.0
                } else {
                    step
                }
            })
            .collect();
        ar.push(TensorEntry::new(name, dims, data)).unwrap();
    }
    ar
}

fn instance(
    ids: Vec<u32>,
    subject: usize,
    candidates: Candidates,
    class: GenderClass,
    id: String,
) -> PromptInstance {
    PromptInstance {
        id,
        template_id: 0,
        template: String::new(),
        subject: format!("tok{}", ids[subject]),
        text: String::new(),
        ids,
        subject_positions: subject..subject + 1,
        candidates,
        gender_class: class,
    }
}

fn distinct_pair(rng: &mut ChaCha8Rng, vocab: u32) -> (u32, u32) {
    let a = rng.random_range(0..vocab);
    let b = (a + rng.random_range(1..vocab)) % vocab;
    (a, b)
}

/// Random pronoun-protocol pair whose prompts differ at one subject token.
pub fn random_pronoun_pair(rng: &mut ChaCha8Rng, config: &ModelConfig, case: usize) -> InterventionPair {
    let vocab = config.vocab_size as u32;
    let len = rng.random_range(2..=config.max_seq.min(8));
    let ids: Vec<u32> = (0..len).map(|_| rng.random_range(0..vocab)).collect();
    let subject = rng.random_range(0..len);
    let mut swapped = ids.clone();
    swapped[subject] = (ids[subject] + rng.random_range(1..vocab)) % vocab;
    let (stereo, anti) = distinct_pair(rng, vocab);
    let cands = Candidates::Pronouns { stereo, anti };
    let class = if rng.random_bool(0.5) {
        GenderClass::Male
    } else {
        GenderClass::Female
    };
    InterventionPair {
        null: instance(ids, subject, cands.clone(), class, format!("case{case}")),
        intervened: instance(swapped, subject, cands, class, format!("case{case}")),
    }
}

/// Random continuation-protocol pair differing in the final token.
pub fn random_continuation_pair(rng: &mut ChaCha8Rng, config: &ModelConfig, case: usize) -> InterventionPair {
    let vocab = config.vocab_size as u32;
    let len = rng.random_range(2..=5);
    let ids: Vec<u32> = (0..len).map(|_| rng.random_range(0..vocab)).collect();
    let mut swapped = ids.clone();
    swapped[len - 1] = (ids[len - 1] + rng.random_range(1..vocab)) % vocab;
    let cont = |rng: &mut ChaCha8Rng| -> Vec<u32> {
        (0..rng.random_range(1..=3))
            .map(|_| rng.random_range(0..vocab))
            .collect()
    };
    let stereo = cont(rng);
    let mut anti = cont(rng);
    while anti == stereo {
        anti = cont(rng);
    }
    let cands = Candidates::Continuations { stereo, anti };
    InterventionPair {
        null: instance(ids, len - 1, cands.clone(), GenderClass::Male, format!("w{case}")),
        intervened: instance(swapped, len - 1, cands, GenderClass::Male, format!("w{case}")),
    }
}
