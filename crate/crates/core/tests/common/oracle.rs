// SPDX-License-Identifier: MIT OR Apache-2.0

//! Explicit-loop reference forward pass. Shares nothing with the engine but
//! the tensor names; GELU uses quadrature of the Gaussian density.

#![allow(dead_code)]

use medlab_core::engine::{Family, ModelConfig, NormStyle};
use medlab_core::TensorArchive;

pub type Mat = Vec<Vec<f64>>;

/// `Φ(x)` by composite Simpson on the standard normal density.
pub fn phi(x: f64) -> f64 {
    const N: usize = 4000;
    let h = x / N as f64;
    let density = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = density(0.0) + density(x);
    for i in 1..N {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * density(i as f64 * h);
    }
    0.5 + acc * h / 3.0
}

pub fn gelu(x: f64) -> f64 {
    x * phi(x)
}

fn vector(ar: &TensorArchive, name: &str) -> Vec<f64> {
    ar.get(name)
        .unwrap_or_else(|| panic!("oracle: missing {name}"))
        .data
        .iter()
        .map(|&v| v as f64)
        .collect()
}

fn matrix(ar: &TensorArchive, name: &str) -> Mat {
    let e = ar.get(name).unwrap_or_else(|| panic!("oracle: missing {name}"));
    let cols = e.dims[1];
    e.data
        .chunks(cols)
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect()
}

fn linear(x: &Mat, w: &Mat, b: &[f64]) -> Mat {
    let mut out = vec![vec![0.0; b.len()]; x.len()];
    for i in 0..x.len() {
        for j in 0..b.len() {
            let mut acc = b[j];
            for k in 0..x[i].len() {
                acc += x[i][k] * w[k][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

fn norm(x: &Mat, gamma: &[f64], beta: &[f64], eps: f64) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mut mean = 0.0;
            for v in row {
                mean += v;
            }
            mean /= n;
            let mut var = 0.0;
            for v in row {
                var += (v - mean) * (v - mean);
            }
            var /= n;
            (0..row.len())
                .map(|j| gamma[j] * (row[j] - mean) / (var + eps).sqrt() + beta[j])
                .collect()
        })
        .collect()
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
        .collect()
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    for &x in v {
        if x > m {
            m = x;
        }
    }
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// `(layer, position, unit, value)`; layer 0 is the embedding output.
    pub neurons: Vec<(usize, usize, usize, f64)>,
    /// `(layer, head, probs)`
    pub heads: Vec<(usize, usize, Mat)>,
}

pub struct OracleOut {
    pub layers: Vec<Mat>,
    /// `[layer][head]`
    pub attn: Vec<Vec<Mat>>,
    pub hidden: Mat,
    pub logits: Mat,
}

pub fn forward(cfg: &ModelConfig, ar: &TensorArchive, ids: &[u32], ov: &Overrides) -> OracleOut {
    let d = cfg.d_model;
    let dh = d / cfg.n_heads;
    let tok = matrix(ar, "tok_emb");
    let pos = matrix(ar, "pos_emb");
    let set = |x: &mut Mat, layer: usize| {
        for &(l, p, u, v) in &ov.neurons {
            if l == layer {
                x[p][u] = v;
            }
        }
    };
    let mut x: Mat = ids
        .iter()
        .enumerate()
        .map(|(t, &id)| (0..d).map(|j| tok[id as usize][j] + pos[t][j]).collect())
        .collect();
    set(&mut x, 0);
    let mut layers = vec![x.clone()];
    let mut attn = Vec::new();
    let n = ids.len();
    for l in 0..cfg.n_layers {
        let p = |s: &str| format!("layer.{l}.{s}");
        let ln = |x: &Mat, which: &str| {
            norm(
                x,
                &vector(ar, &p(&format!("{which}.gamma"))),
                &vector(ar, &p(&format!("{which}.beta"))),
                cfg.ln_epsilon,
            )
        };
        let proj = |x: &Mat, which: &str| {
            linear(
                x,
                &matrix(ar, &p(&format!("{which}.weight"))),
                &vector(ar, &p(&format!("{which}.bias"))),
            )
        };
        let attention = |h: &Mat, heads_out: &mut Vec<Mat>| -> Mat {
            let (q, k, v) = (proj(h, "attn.q"), proj(h, "attn.k"), proj(h, "attn.v"));
            let mut merged = vec![vec![0.0; d]; n];
            for head in 0..cfg.n_heads {
                let replaced = ov.heads.iter().rev().find(|(hl, hh, _)| *hl == l && *hh == head);
                let probs: Mat = match replaced {
                    Some((_, _, m)) => m.clone(),
                    None => (0..n)
                        .map(|i| {
                            let visible = if cfg.family == Family::Causal { i + 1 } else { n };
                            let scores: Vec<f64> = (0..visible)
                                .map(|j| {
                                    let mut s = 0.0;
                                    for c in head * dh..(head + 1) * dh {
                                        s += q[i][c] * k[j][c];
                                    }
                                    s / (dh as f64).sqrt()
                                })
                                .collect();
                            let mut row = softmax(&scores);
                            row.resize(n, 0.0);
                            row
                        })
                        .collect(),
                };
                for i in 0..n {
                    for j in 0..n {
                        for c in head * dh..(head + 1) * dh {
                            merged[i][c] += probs[i][j] * v[j][c];
                        }
                    }
                }
                heads_out.push(probs);
            }
            proj(&merged, "attn.o")
        };
        let mlp = |h: &Mat| -> Mat {
            let mut a = proj(h, "mlp.fc_in");
            for row in &mut a {
                for v in row.iter_mut() {
                    *v = gelu(*v);
                }
            }
            proj(&a, "mlp.fc_out")
        };
        let mut heads = Vec::new();
        x = match cfg.norm_style {
            NormStyle::Pre => {
                let x1 = add(&x, &attention(&ln(&x, "ln1"), &mut heads));
                add(&x1, &mlp(&ln(&x1, "ln2")))
            }
            NormStyle::Post => {
                let x1 = ln(&add(&x, &attention(&x, &mut heads)), "ln1");
                ln(&add(&x1, &mlp(&x1)), "ln2")
            }
        };
        set(&mut x, l + 1);
        layers.push(x.clone());
        attn.push(heads);
    }
    let hidden = norm(
        &x,
        &vector(ar, "ln_f.gamma"),
        &vector(ar, "ln_f.beta"),
        cfg.ln_epsilon,
    );
    let out = matrix(
        ar,
        if cfg.tied_embeddings {
            "tok_emb"
        } else {
            "lm_head.weight"
        },
    );
    let logits = hidden
        .iter()
        .map(|h| {
            out.iter()
                .map(|e| h.iter().zip(e).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    OracleOut {
        layers,
        attn,
        hidden,
        logits,
    }
}

/// Natural log of `softmax(row)[i]`, via the full distribution.
pub fn log_prob(row: &[f64], i: usize) -> f64 {
    softmax(row)[i].ln()
}

/// Pronoun-protocol ratio `p(anti) / p(stereo)` at the last position.
pub fn pronoun_ratio(out: &OracleOut, stereo: u32, anti: u32) -> f64 {
    let p = softmax(out.logits.last().unwrap());
    p[anti as usize] / p[stereo as usize]
}

pub fn max_abs_diff(a: &Mat, b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}
