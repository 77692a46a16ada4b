// SPDX-License-Identifier: MIT OR Apache-2.0

//! Writes the bundled tiny fixture set: a seeded causal model over a small
//! word vocabulary, one dataset per experiment kind and a config for each.
//!
//! `cargo run -p medlab-cli --example gen_fixtures -- [OUT_DIR]`
//! (default `fixtures/tiny` under the workspace root).

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::json;

use medlab_core::engine::{Family, ModelConfig, NormStyle};
use medlab_core::synth::random_archive;
use medlab_core::tensor_store::write_archive;

const SEED: u64 = 20_190_705;

const WORDS: &[&str] = &[
    "[UNK]",
    "the",
    "a",
    "man",
    "woman",
    "he",
    "she",
    "his",
    "her",
    "him",
    "said",
    "that",
    "was",
    "is",
    "because",
    "asked",
    "if",
    "wrote",
    "engineer",
    "nurse",
    "doctor",
    "teacher",
    "secretary",
    "mechanic",
    "baker",
    "pilot",
    "tired",
    "busy",
    "late",
    "strong",
    "gentle",
    "work",
    "home",
    "family",
    "career",
    "boy",
    "girl",
    "father",
    "mother",
    "son",
    "daughter",
    "paper",
    "and",
    "to",
    "of",
    "helped",
];

const PROFESSIONS: &str = "\
# word,gender_class
engineer,male
mechanic,male
pilot,male
doctor,male
nurse,female
secretary,female
teacher,female
baker,female
";

const TEMPLATES: &str = "\
the [subject] said that
the [subject] was late because
the [subject] asked if
the [subject] wrote that
";

const WINOBIAS: &str = "\
# prompt|stereo continuation|anti continuation|swapped pronoun
the mechanic helped the nurse because she|was tired|was strong|he
the nurse helped the mechanic because he|was strong|was tired|she
the secretary asked the pilot if he|was late|was gentle|she
the pilot asked the secretary if she|was busy|was late|he
the doctor wrote that the baker said she|is gentle|is strong|he
the engineer said that the teacher asked if she|is tired and busy|is strong|he
";

const CROWS: &str = "\
stereo,anti,category
the man was strong,the woman was strong,gender
the woman was gentle,the man was gentle,gender
he is a doctor,she is a doctor,gender
the nurse said that she was tired,the nurse said that he was tired,gender
his career is work,her career is work,gender
the mother was home,the father was home,gender
";

const CROWS_TIES: &str = "\
stereo,anti,category
the man was strong,the man was strong,gender
she is a nurse,she is a nurse,gender
the pilot was late,the pilot was late,gender
";

const LEXICON: &str = "\
he\tshe
his\ther
man\twoman
boy\tgirl
father\tmother
son\tdaughter
";

const CORPUS: &str = "\
the man said that he was tired.
Her most significant piece of work was the bridge.
THE BOY HELPED HIS FATHER.
the teacher asked if the engineer was busy.
She wrote that her son was late.
";

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) {
    fs::write(dir.join(name), contents).unwrap_or_else(|e| panic!("{name}: {e}"));
}

fn write_json(dir: &Path, name: &str, value: &serde_json::Value) {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    write(dir, name, bytes);
}

fn config() -> ModelConfig {
    ModelConfig {
        family: Family::Causal,
        n_layers: 2,
        n_heads: 2,
        d_model: 8,
        d_ff: 16,
        vocab_size: WORDS.len(),
        max_seq: 24,
        norm_style: NormStyle::Pre,
        ln_epsilon: 1e-5,
        tied_embeddings: true,
        mask_token_id: None,
    }
}

fn main() {
    let out = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/tiny"));
    fs::create_dir_all(&out).expect("create output directory");

    let cfg = config();
    let archive = random_archive(&cfg, SEED);
    let file = File::create(out.join("model.mlab")).expect("model.mlab");
    write_archive(&archive, BufWriter::new(file)).expect("write archive");
    write_json(&out, "config.json", &serde_json::to_value(&cfg).expect("config"));
    write(
        &out,
        "vocab.txt",
        format!("#vocab unk=[UNK] uncased\n{}\n", WORDS.join("\n")),
    );

    write(&out, "professions.csv", PROFESSIONS);
    write(&out, "templates.txt", TEMPLATES);
    write(&out, "winobias.txt", WINOBIAS);
    write(&out, "crows.csv", CROWS);
    write(&out, "crows_ties.csv", CROWS_TIES);
    write(&out, "lexicon.tsv", LEXICON);
    write(&out, "corpus.txt", CORPUS);
    write(
        &out,
        "prompts.txt",
        "the engineer said that\nthe nurse was late because\n",
    );
    write_json(
        &out,
        "seat_gender.json",
        &json!({
            "targ1": {"examples": ["the man", "the boy", "the father", "the son"]},
            "targ2": {"examples": ["the woman", "the girl", "the mother", "the daughter"]},
            "attr1": {"examples": ["career", "work", "paper"]},
            "attr2": {"examples": ["family", "home", "gentle"]}
        }),
    );

    let model = json!({
        "archive": "model.mlab",
        "config": "config.json",
        "tokenizer": {"vocab": "vocab.txt"}
    });
    let configs = [
        (
            "neuron.json",
            json!({
                "kind": "neuron-mediation",
                "model": model,
                "data": {"professions": "professions.csv", "templates": "templates.txt"},
                "params": {"top_fraction": 0.1},
                "output_dir": "out/neuron"
            }),
        ),
        (
            "attention.json",
            json!({
                "kind": "attention-mediation",
                "model": model,
                "data": {"winobias": "winobias.txt"},
                "params": {"top_fraction": 0.25},
                "output_dir": "out/attention"
            }),
        ),
        (
            "crows.json",
            json!({
                "kind": "crows",
                "model": model,
                "data": {"crows": "crows.csv"},
                "output_dir": "out/crows"
            }),
        ),
        (
            "crows_ties.json",
            json!({
                "kind": "crows",
                "model": model,
                "data": {"crows": "crows_ties.csv"},
                "output_dir": "out/crows_ties"
            }),
        ),
        (
            "seat.json",
            json!({
                "kind": "seat",
                "model": model,
                "data": {"seat": ["seat_gender.json"]},
                "params": {"permutation": {"mode": "sampled", "n": 500, "seed": 7}},
                "output_dir": "out/seat"
            }),
        ),
        (
            "cda.json",
            json!({
                "kind": "cda",
                "data": {"corpus": "corpus.txt", "lexicon": "lexicon.tsv"},
                "params": {"cda_mode": "two-sided"},
                "output_dir": "out/cda"
            }),
        ),
    ];
    for (name, value) in &configs {
        write_json(&out, name, value);
    }
    eprintln!("wrote fixtures to {}", out.display());
}
