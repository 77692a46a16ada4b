// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance checks. Each returns a short detail line on success and the
//! reason on failure.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use medlab_core::cda::{augment_corpus, swap_text, AugmentMode, WordPairLexicon};
use medlab_core::engine::{log_softmax, Family, InterventionSpec, Matrix, Model, NormStyle};
use medlab_core::mediation::{
    attention_direct_effect, attention_indirect_effect, bias_ratio, neuron_direct_effect,
    neuron_indirect_effect, select_top_neurons, total_effect, GenderClass, GenderWords, InterventionPair,
    Orientation, PromptInstance, Site, SiteReport, SiteSummary,
};
use medlab_core::metrics::{
    association_score, crows_score, effect_size, permutation_pvalue, PermutationMode, SentencePair,
};
use medlab_core::synth;
use medlab_core::text::{Tokenizer, Vocab};

use super::fixtures;
use super::oracle;

pub type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

/// Engine logits against the explicit-loop oracle on the hand-weight model.
pub fn engine_oracle() -> Check {
    const TOL: f64 = 1e-6;
    let inputs: [&[u32]; 3] = [&[1, 5, 2, 7, 0, 3], &[4], &[7, 7, 6, 1, 2, 3, 4, 5]];
    let mut worst = 0.0f64;
    let mut engine_time = 0.0f64;
    for (family, style, tied) in [
        (Family::Causal, NormStyle::Pre, true),
        (Family::Causal, NormStyle::Post, false),
        (Family::Bidirectional, NormStyle::Post, false),
    ] {
        let cfg = fixtures::hand_config(family, style, tied);
        let ar = fixtures::hand_archive(&cfg);
        for ids in inputs {
            let start = Instant::now();
            let model = Model::from_archive(cfg.clone(), &ar).map_err(e)?;
            let trace = model.forward(ids).map_err(e)?;
            engine_time = engine_time.max(start.elapsed().as_secs_f64());
            let want = oracle::forward(&cfg, &ar, ids, &oracle::Overrides::default());
            let diff = oracle::max_abs_diff(&want.logits, &trace.logits.to_rows());
            worst = worst.max(diff);
            ensure(diff <= TOL, || {
                format!("{family:?}/{style:?} {ids:?}: max |Δlogit| {diff:e} > {TOL:e}")
            })?;
        }
    }
    ensure(engine_time < 1.0, || {
        format!("engine pass took {engine_time:.3}s")
    })?;
    Ok(format!(
        "max |Δlogit| {worst:.2e}, slowest load+forward {:.1} ms",
        engine_time * 1e3
    ))
}

/// No-op neuron sets and self attention replacements, and zero effects of
/// interventions that change nothing.
pub fn intervention_identities() -> Check {
    const TOL: f64 = 1e-9;
    let cfg = synth::tiny_config(Family::Causal);
    let models: Vec<Model> = (0..5).map(|s| synth::random_model(&cfg, 100 + s)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let model = &models[case % models.len()];
        let pair = fixtures::random_pronoun_pair(&mut rng, &cfg, case);
        let ids = &pair.null.ids;
        let base = model.forward(ids).map_err(e)?;
        let spec = if case % 2 == 0 {
            let (l, p, u) = (
                rng.random_range(0..=cfg.n_layers),
                rng.random_range(0..ids.len()),
                rng.random_range(0..cfg.d_model),
            );
            InterventionSpec::neuron(l, p, u, base.neuron(l, p, u))
        } else {
            let (l, h) = (
                rng.random_range(0..cfg.n_layers),
                rng.random_range(0..cfg.n_heads),
            );
            InterventionSpec::attention(l, h, base.attention_probs[l][h].clone())
        };
        let hooked = model.forward_trace(ids, &spec).map_err(e)?;
        let diff = hooked.logits.max_abs_diff(&base.logits);
        worst = worst.max(diff);
        ensure(diff <= TOL, || {
            format!("case {case}: no-op intervention moved logits by {diff:e}")
        })?;

        let noop = InterventionPair {
            null: pair.null.clone(),
            intervened: pair.null.clone(),
        };
        let neuron = Site::Neuron {
            layer: rng.random_range(0..=cfg.n_layers),
            unit: rng.random_range(0..cfg.d_model),
        };
        let head = Site::Head {
            layer: rng.random_range(0..cfg.n_layers),
            head: rng.random_range(0..cfg.n_heads),
        };
        let effects = [
            ("TE", total_effect(model, &noop).map_err(e)?.effect),
            (
                "IE",
                neuron_indirect_effect(model, &noop, neuron).map_err(e)?.effect,
            ),
            (
                "DE",
                neuron_direct_effect(model, &noop, neuron).map_err(e)?.effect,
            ),
            (
                "IE(head)",
                attention_indirect_effect(model, &noop, head).map_err(e)?.effect,
            ),
            (
                "DE(head)",
                attention_direct_effect(model, &noop, head).map_err(e)?.effect,
            ),
        ];
        for (name, v) in effects {
            ensure(v == 0.0, || {
                format!("case {case}: no-op {name} = {v:e}, expected exactly 0")
            })?;
        }
    }
    Ok(format!(
        "100 cases, max |Δlogit| {worst:.1e}, all no-op effects exactly 0"
    ))
}

fn y_pronoun(logits: &Matrix, pair: &InterventionPair) -> f64 {
    let row = log_softmax(logits.row(logits.rows() - 1));
    let (s, a) = match &pair.null.candidates {
        medlab_core::mediation::Candidates::Pronouns { stereo, anti } => (*stereo as usize, *anti as usize),
        _ => unreachable!("pronoun pairs only"),
    };
    (row[a] - row[s]).exp()
}

/// Hook-path neuron indirect effects against a manual splice of the
/// residual stream, re-run from the modified layer.
pub fn mediation_splice() -> Check {
    const TOL: f64 = 1e-9;
    let cfg = synth::tiny_config(Family::Causal);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let model = synth::random_model(&cfg, 500 + case as u64);
        let pair = fixtures::random_pronoun_pair(&mut rng, &cfg, case);
        let (layer, unit) = (
            rng.random_range(0..=cfg.n_layers),
            rng.random_range(0..cfg.d_model),
        );
        let hook = neuron_indirect_effect(&model, &pair, Site::Neuron { layer, unit }).map_err(e)?;

        let pos = pair.null.intervention_position();
        let set_value = model.forward(&pair.intervened.ids).map_err(e)?.layer_outputs[layer][(pos, unit)];
        let null = model.forward(&pair.null.ids).map_err(e)?;
        let mut residual = null.layer_outputs[layer].clone();
        residual[(pos, unit)] = set_value;
        let spliced = model.resume_from(layer, residual).map_err(e)?;
        let (y0, y1) = (y_pronoun(&null.logits, &pair), y_pronoun(&spliced, &pair));
        let splice_effect = (y1 - y0) / y0;
        let diff = (hook.effect - splice_effect).abs();
        worst = worst.max(diff);
        ensure(diff <= TOL, || {
            format!(
                "case {case}: hook {} vs splice {splice_effect} (Δ {diff:e})",
                hook.effect
            )
        })?;
    }
    Ok(format!("50 cases, max |ΔIE| {worst:.1e}"))
}

/// Whitespace vocabulary shared by the prompt-level checks.
pub fn words_tokenizer() -> Tokenizer {
    Tokenizer::Vocab(
        Vocab::new(
            [
                "[UNK]", "the", "engineer", "nurse", "man", "woman", "said", "that", "he", "she", "fixed",
                "is", "grateful", "charged", "a", "lot",
            ],
            true,
        )
        .unwrap()
        .with_special("unk", "[UNK]")
        .unwrap(),
    )
}

/// A network whose profession and gender-word embeddings differ in one unit,
/// so that unit at the subject position carries every effect of the swap.
pub fn constructed_mediator() -> Check {
    const TOL: f64 = 1e-6;
    let tok = words_tokenizer();
    let cfg = synth::tiny_config(Family::Causal);
    let mut ar = synth::random_archive(&cfg, 31);
    let mut entries: Vec<_> = ar.entries().to_vec();
    let emb = entries.iter_mut().find(|t| t.name == "tok_emb").unwrap();
    let d = cfg.d_model;
    let (engineer, woman) = (2, 5);
    for j in 0..d {
        emb.data[woman * d + j] = emb.data[engineer * d + j];
    }
    emb.data[woman * d] += 1.5;
    ar = medlab_core::TensorArchive::from_entries(entries).map_err(e)?;
    let model = Model::from_archive(cfg, &ar).map_err(e)?;

    let words = GenderWords::default();
    let prompt = PromptInstance::profession(
        &tok,
        0,
        "The [subject] said that",
        "engineer",
        GenderClass::Male,
        &words,
    )
    .map_err(e)?;
    let pair =
        InterventionPair::set_gender(&tok, prompt, words.anti_stereotypical_subject(GenderClass::Male))
            .map_err(e)?;
    let site = Site::Neuron { layer: 0, unit: 0 };
    let te = total_effect(&model, &pair).map_err(e)?.effect;
    let ie = neuron_indirect_effect(&model, &pair, site).map_err(e)?.effect;
    let de = neuron_direct_effect(&model, &pair, site).map_err(e)?.effect;
    ensure(te.abs() > 1e-3, || format!("degenerate instance: TE = {te:e}"))?;
    ensure((ie - te).abs() <= TOL, || format!("IE {ie} vs TE {te}"))?;
    ensure(de.abs() <= TOL, || format!("DE {de} not ≈ 0"))?;
    Ok(format!("TE {te:.6}, IE {ie:.6}, DE {de:.1e}"))
}

/// Score on the all-ties fixture, role-swap symmetry and uniform-model PLL.
pub fn crows_properties() -> Check {
    let tok = words_tokenizer();
    let model = synth::random_model(&synth::tiny_config(Family::Causal), 8);
    let pair = |s: &str, a: &str| SentencePair {
        stereo: s.into(),
        anti: a.into(),
        category: "gender".into(),
    };
    let ties: Vec<_> = [
        "the nurse said that",
        "he fixed a lot",
        "the engineer is grateful",
    ]
    .iter()
    .map(|s| pair(s, s))
    .collect();
    let tie_score = crows_score(&model, &tok, &ties).map_err(e)?.score;
    ensure(tie_score == 50.0, || format!("all-ties score {tie_score}"))?;

    let fixture = vec![
        pair("the engineer said that he", "the engineer said that she"),
        pair("the nurse is grateful", "the man is grateful"),
        pair("he fixed a lot", "she fixed a lot"),
        pair("the woman charged a lot", "the man charged a lot"),
        pair("she said that", "he said that"),
    ];
    let swapped: Vec<_> = fixture.iter().map(|p| pair(&p.anti, &p.stereo)).collect();
    let fwd = crows_score(&model, &tok, &fixture).map_err(e)?;
    let back = crows_score(&model, &tok, &swapped).map_err(e)?;
    ensure(fwd.ties == 0, || {
        format!("role-swap fixture has {} ties", fwd.ties)
    })?;
    let sum = fwd.score + back.score;
    ensure((sum - 100.0).abs() <= 1e-9, || {
        format!("score {} + swapped {} = {sum}", fwd.score, back.score)
    })?;

    let (cfg, uniform) = synth::uniform_model(&synth::tiny_config(Family::Causal), 3);
    let v = cfg.vocab_size as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let len = rng.random_range(2..=cfg.max_seq);
        let ids: Vec<u32> = (0..len)
            .map(|_| rng.random_range(0..cfg.vocab_size as u32))
            .collect();
        let pll = uniform.pseudo_log_likelihood(&ids).map_err(e)?;
        let want = (len as f64 - 1.0) * (1.0 / v).ln();
        ensure((pll - want).abs() <= 1e-9, || {
            format!("uniform PLL {pll} vs {want} at L = {len}")
        })?;
    }
    Ok(format!(
        "ties 50.0, {} + {} = 100, uniform PLL exact",
        fwd.score, back.score
    ))
}

/// Independent enumeration over bit masks.
fn enumerate_pvalue(sx: &[f64], sy: &[f64]) -> (f64, usize) {
    let all: Vec<f64> = sx.iter().chain(sy).copied().collect();
    let n = all.len();
    let stat = |mask: u32| -> f64 {
        (0..n)
            .map(|i| if mask >> i & 1 == 1 { all[i] } else { -all[i] })
            .sum()
    };
    let observed = stat((1 << sx.len()) - 1);
    let masks: Vec<u32> = (0..1u32 << n)
        .filter(|m| m.count_ones() as usize == sx.len())
        .collect();
    let hits = masks.iter().filter(|&&m| stat(m) >= observed - 1e-12).count();
    (hits as f64 / masks.len() as f64, masks.len())
}

/// Effect size and permutation p-value properties.
pub fn seat_properties() -> Check {
    let a = vec![vec![1.0, 0.0]];
    let b = vec![vec![0.0, 1.0]];
    let scores = |set: &[Vec<f64>]| -> Result<Vec<f64>, String> {
        set.iter()
            .map(|w| association_score(w, &a, &b).map_err(e))
            .collect()
    };
    let x = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
    let y = vec![vec![0.0, 1.0], vec![1.0, 1.0]];
    let d_same = effect_size(&scores(&x)?, &scores(&x)?).map_err(e)?;
    ensure(d_same == 0.0, || format!("X == Y gives d = {d_same}"))?;
    // s = {1, 0} and {-1, 0}: means ±0.5, population σ = √0.5, d = √2.
    let d = effect_size(&scores(&x)?, &scores(&y)?).map_err(e)?;
    ensure((d - 2f64.sqrt()).abs() <= 1e-12, || {
        format!("hand d = {d}, expected √2")
    })?;

    let sx = [0.31, 0.12, 0.25];
    let sy = [0.05, 0.22, -0.08];
    let exact = permutation_pvalue(&sx, &sy, PermutationMode::Exact).map_err(e)?;
    let (want, partitions) = enumerate_pvalue(&sx, &sy);
    ensure(partitions == 20, || format!("{partitions} partitions"))?;
    ensure((exact - want).abs() <= 1e-15, || {
        format!("exact p {exact} vs enumeration {want}")
    })?;

    let n = 2000;
    let sampled = permutation_pvalue(&sx, &sy, PermutationMode::Sampled { n, seed: 11 }).map_err(e)?;
    let se = (exact * (1.0 - exact) / n as f64).sqrt();
    ensure((sampled - exact).abs() <= 3.0 * se, || {
        format!("sampled {sampled} vs exact {exact}, 3σ = {}", 3.0 * se)
    })?;
    Ok(format!(
        "d(X,X) = 0, hand d = √2, exact p {exact:.4} over 20, sampled {sampled:.4} (3σ {:.4})",
        3.0 * se
    ))
}

const FILLER: [&str; 12] = [
    "the",
    "mother",
    "other",
    "brotherhood",
    "shelf",
    "x9",
    "Hero's",
    "sheep",
    "hiss",
    "Éclair",
    "manor",
    "42",
];
const GAPS: [&str; 8] = [" ", ", ", ". ", "; ", " -- ", "\t", "'", "!  "];

/// Swap of the reference sentence, involution on a 10k-line corpus and
/// untouched bytes outside lexicon words.
pub fn cda_properties() -> Check {
    let lex = WordPairLexicon::default_pairs();
    let got = swap_text("Her most significant piece of work", &lex);
    ensure(got == "His most significant piece of work", || {
        format!("got `{got}`")
    })?;

    let mut words: Vec<String> = DEFAULT_WORDS.iter().map(|s| s.to_string()).collect();
    words.extend(FILLER.iter().map(|s| s.to_string()));
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let mut corpus = String::new();
    for _ in 0..10_000 {
        for _ in 0..rng.random_range(1..12) {
            let w = &words[rng.random_range(0..words.len())];
            let w = match rng.random_range(0..3) {
                0 => w.clone(),
                1 => w.to_uppercase(),
                _ => {
                    let mut c = w.chars();
                    c.next()
                        .map(|f| f.to_uppercase().chain(c).collect())
                        .unwrap_or_default()
                }
            };
            corpus.push_str(&w);
            corpus.push_str(GAPS[rng.random_range(0..GAPS.len())]);
        }
        corpus.push('\n');
    }
    let mut once = Vec::new();
    let stats = augment_corpus(corpus.as_bytes(), &mut once, &lex, AugmentMode::Replace).map_err(e)?;
    let mut twice = Vec::new();
    augment_corpus(&once[..], &mut twice, &lex, AugmentMode::Replace).map_err(e)?;
    ensure(stats.lines_read == 10_000, || {
        format!("{} lines read", stats.lines_read)
    })?;
    ensure(twice == corpus.as_bytes(), || {
        "replace ∘ replace is not the identity".into()
    })?;

    let seg = Regex::new(r"[\p{L}\p{N}]+|[^\p{L}\p{N}]+").unwrap();
    let swapped = String::from_utf8(once).map_err(e)?;
    let mut replaced = 0usize;
    for (orig, new) in corpus.lines().zip(swapped.lines()) {
        let (a, b): (Vec<&str>, Vec<&str>) = (
            seg.find_iter(orig).map(|m| m.as_str()).collect(),
            seg.find_iter(new).map(|m| m.as_str()).collect(),
        );
        ensure(a.len() == b.len(), || {
            format!("segment count changed in `{orig}`")
        })?;
        for (x, y) in a.iter().zip(&b) {
            match lex.counterpart(&x.to_lowercase()) {
                Some(c) => {
                    ensure(y.to_lowercase() == c, || format!("`{x}` became `{y}`"))?;
                    replaced += 1;
                }
                None => ensure(x == y, || format!("non-lexicon bytes `{x}` became `{y}`"))?,
            }
        }
    }
    Ok(format!(
        "reference sentence ok, 10k lines involutive, {replaced} swaps, other bytes identical"
    ))
}

const DEFAULT_WORDS: [&str; 12] = [
    "he", "she", "his", "her", "man", "woman", "father", "mother", "king", "queen", "himself", "herself",
];

/// Selection of the top 2.5% of 1000 sites against a selection-sort oracle.
pub fn top_neuron_selection() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let sites: Vec<SiteSummary> = (0..1000)
        .map(|i| SiteSummary {
            site: Site::Neuron {
                layer: i / 100,
                unit: i % 100,
            },
            // Coarse grid so ties occur.
            mean_indirect: (rng.random_range(0..400) as f64) / 100.0,
            mean_direct: 0.0,
            count: 1,
        })
        .collect();
    let report = SiteReport {
        orientation: Orientation::AntiOverStereo,
        layer_count: 10,
        sites: sites.clone(),
        records: vec![],
        skipped: vec![],
    };
    let top = select_top_neurons(&report, 0.025).map_err(e)?;
    ensure(top.len() == 25, || format!("{} sites selected", top.len()))?;

    let mut taken = BTreeSet::new();
    for (rank, got) in top.iter().enumerate() {
        let best = (0..sites.len())
            .filter(|i| !taken.contains(i))
            .fold(None::<usize>, |best, i| match best {
                None => Some(i),
                Some(j) => {
                    let (a, b) = (&sites[i], &sites[j]);
                    let better = a.mean_indirect > b.mean_indirect
                        || (a.mean_indirect == b.mean_indirect
                            && (a.site.layer(), a.site.index()) < (b.site.layer(), b.site.index()));
                    Some(if better { i } else { j })
                }
            })
            .unwrap();
        taken.insert(best);
        ensure(got.site == sites[best].site, || {
            format!("rank {rank}: got {} expected {}", got.site, sites[best].site)
        })?;
    }
    Ok("25 of 1000 sites, ranking matches selection sort".into())
}

/// Attention IE / DE against oracle recomputation with captured head weights.
pub fn attention_splice() -> Check {
    const TOL: f64 = 1e-9;
    let cfg = synth::tiny_config(Family::Causal);
    let ar = synth::random_archive(&cfg, 12);
    let model = Model::from_archive(cfg.clone(), &ar).map_err(e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for case in 0..10 {
        let pair = fixtures::random_continuation_pair(&mut rng, &cfg, case);
        let (layer, head) = (
            rng.random_range(0..cfg.n_layers),
            rng.random_range(0..cfg.n_heads),
        );
        let site = Site::Head { layer, head };
        let (stereo, anti) = match &pair.null.candidates {
            medlab_core::mediation::Candidates::Continuations { stereo, anti } => {
                (stereo.clone(), anti.clone())
            }
            _ => unreachable!(),
        };
        let logp = |target: &[u32], source: Option<&[u32]>, cont: &[u32]| -> f64 {
            let ext = &cont[..cont.len() - 1];
            let seq: Vec<u32> = target.iter().chain(ext).copied().collect();
            let mut ov = oracle::Overrides::default();
            if let Some(src) = source {
                let s: Vec<u32> = src.iter().chain(ext).copied().collect();
                let captured = oracle::forward(&cfg, &ar, &s, &ov).attn[layer][head].clone();
                ov.heads.push((layer, head, captured));
            }
            let out = oracle::forward(&cfg, &ar, &seq, &ov);
            cont.iter()
                .enumerate()
                .map(|(i, &t)| oracle::log_prob(&out.logits[target.len() - 1 + i], t as usize))
                .sum()
        };
        let y = |target: &[u32], source: Option<&[u32]>| {
            (logp(target, source, &stereo) - logp(target, source, &anti)).exp()
        };
        let y0 = y(&pair.null.ids, None);
        let ie = (y(&pair.null.ids, Some(&pair.intervened.ids)) - y0) / y0;
        let de = (y(&pair.intervened.ids, Some(&pair.null.ids)) - y0) / y0;
        let got_ie = attention_indirect_effect(&model, &pair, site).map_err(e)?.effect;
        let got_de = attention_direct_effect(&model, &pair, site).map_err(e)?.effect;
        let diff = (got_ie - ie).abs().max((got_de - de).abs());
        worst = worst.max(diff);
        ensure(diff <= TOL, || {
            format!("case {case}: IE {got_ie} vs {ie}, DE {got_de} vs {de}")
        })?;
        ensure(bias_ratio(&model, &pair.null).is_ok(), || {
            "bias ratio failed".into()
        })?;
    }
    Ok(format!("10 cases, max |Δ| {worst:.1e}"))
}
