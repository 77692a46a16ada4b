// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use medlab_core::cda::{augment_corpus, AugmentMode, WordPairLexicon};

/// Counterfactual augmentation of a line-oriented corpus.
#[derive(Parser)]
#[command(name = "cda", version)]
struct Args {
    /// `word_a<TAB>word_b` per line; the bundled pair list when omitted.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value = "two-sided")]
    mode: AugmentMode,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON statistics.
    #[arg(long)]
    stats: Option<PathBuf>,
}

fn run(args: Args) -> Result<(), String> {
    let lex = match &args.lexicon {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            WordPairLexicon::parse(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => WordPairLexicon::default_pairs(),
    };
    let input = File::open(&args.input).map_err(|e| format!("{}: {e}", args.input.display()))?;
    let output = File::create(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    let stats = augment_corpus(BufReader::new(input), BufWriter::new(output), &lex, args.mode)
        .map_err(|e| e.to_string())?;
    if let Some(p) = &args.stats {
        let mut json = serde_json::to_vec_pretty(&stats).map_err(|e| e.to_string())?;
        json.push(b'\n');
        fs::write(p, json).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
