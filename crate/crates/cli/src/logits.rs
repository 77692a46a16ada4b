// SPDX-License-Identifier: MIT OR Apache-2.0

//! Logit dump used for parity checks against reference implementations.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::TokenizerPaths;
use crate::pipeline::{load_model, load_tokenizer, RunError};

#[derive(Serialize)]
struct Line<'a> {
    prompt: &'a str,
    ids: Vec<u32>,
    /// `[seq][vocab]`
    logits: Vec<Vec<f64>>,
}

/// Model directory layout: `model.mlab`, `config.json` and either
/// `vocab.txt` or `merges.txt` + `vocab.json`.
pub fn dump_logits(model_dir: &Path, prompts: &Path, mut out: impl Write) -> Result<usize, RunError> {
    let model = load_model(&model_dir.join("model.mlab"), &model_dir.join("config.json"))?;
    let vocab = model_dir.join("vocab.txt");
    let paths = if vocab.is_file() {
        TokenizerPaths {
            vocab: Some(vocab),
            merges: None,
            vocab_json: None,
        }
    } else {
        TokenizerPaths {
            vocab: None,
            merges: Some(model_dir.join("merges.txt")),
            vocab_json: Some(model_dir.join("vocab.json")),
        }
    };
    let tokenizer = load_tokenizer(&paths)?;
    let text = fs::read_to_string(prompts).map_err(|e| RunError::Pipeline(format!("prompts: {e}")))?;
    let mut n = 0;
    for prompt in text.lines().filter(|l| !l.trim().is_empty()) {
        let fail = |e: &dyn std::fmt::Display| RunError::Pipeline(format!("prompt `{prompt}`: {e}"));
        let ids = tokenizer.encode(prompt).map_err(|e| fail(&e))?;
        let trace = model.forward(&ids).map_err(|e| fail(&e))?;
        let line = Line {
            prompt,
            ids,
            logits: trace.logits.to_rows(),
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| fail(&e))?;
        out.write_all(b"\n").map_err(|e| fail(&e))?;
        n += 1;
    }
    Ok(n)
}
