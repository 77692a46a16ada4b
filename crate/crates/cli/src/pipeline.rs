// SPDX-License-Identifier: MIT OR Apache-2.0

//! The five experiment pipelines.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use medlab_core::cda::{augment_corpus, WordPairLexicon};
use medlab_core::engine::{Model, ModelConfig};
use medlab_core::mediation::{
    attention_sweep, attention_weight_report, layer_profile, load_professions, load_templates, load_winobias,
    neuron_sweep, profession_grid, select_top_neurons, total_effects, EffectReport, GenderWords,
    InterventionPair, MediationError, PromptInstance, SiteReport, SiteSummary, SkippedPrompt,
};
use medlab_core::metrics::{crows_score, load_crows, load_seat, seat_test, Pooling};
use medlab_core::report::{emit_plot_data, PlotSchema, PlotSource};
use medlab_core::{tensor_store, Tokenizer};

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind, TokenizerPaths};
use crate::outputs::{csv_bytes, InputDigest, Manifest, OutputDir, MANIFEST_FILE};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Pipeline(String),
}

impl RunError {
    /// Process exit status: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Pipeline(_) => 1,
        }
    }
}

trait Context<T> {
    fn ctx(self, what: &str) -> Result<T, RunError>;
}

impl<T, E: std::fmt::Display> Context<T> for Result<T, E> {
    fn ctx(self, what: &str) -> Result<T, RunError> {
        self.map_err(|e| RunError::Pipeline(format!("{what}: {e}")))
    }
}

pub fn load_tokenizer(paths: &TokenizerPaths) -> Result<Tokenizer, RunError> {
    match (&paths.vocab, &paths.merges, &paths.vocab_json) {
        (Some(v), _, _) => Tokenizer::load_vocab(v).ctx("tokenizer"),
        (None, Some(m), Some(j)) => Tokenizer::load_bpe(m, j).ctx("tokenizer"),
        _ => Err(ConfigError::Invalid {
            field: "model.tokenizer",
            message: "no tokenizer files".into(),
        }
        .into()),
    }
}

pub fn load_model(archive: &Path, config: &Path) -> Result<Model, RunError> {
    let text = fs::read_to_string(config).ctx("model config")?;
    let cfg: ModelConfig = serde_json::from_str(&text).ctx("model config")?;
    let weights = tensor_store::load(archive).ctx("model archive")?;
    Model::from_archive(cfg, &weights).ctx("model")
}

struct Loaded {
    model: Model,
    tokenizer: Tokenizer,
}

fn load_pair(cfg: &ExperimentConfig) -> Result<Loaded, RunError> {
    let m = cfg.model.as_ref().ok_or(ConfigError::MissingField {
        field: "model",
        kind: cfg.kind,
    })?;
    let model = load_model(&m.archive, &m.config)?;
    let tokenizer = load_tokenizer(&m.tokenizer)?;
    if tokenizer.vocab_size() > model.config().vocab_size {
        return Err(RunError::Pipeline(format!(
            "tokenizer has {} entries but the model vocabulary is {}",
            tokenizer.vocab_size(),
            model.config().vocab_size
        )));
    }
    Ok(Loaded { model, tokenizer })
}

fn input_digests(cfg: &ExperimentConfig) -> Result<Vec<InputDigest>, RunError> {
    let mut files: Vec<(String, &Path)> = Vec::new();
    if let Some(m) = &cfg.model {
        files.push(("model.archive".into(), &m.archive));
        files.push(("model.config".into(), &m.config));
        let t = &m.tokenizer;
        for (name, p) in [
            ("vocab", &t.vocab),
            ("merges", &t.merges),
            ("vocab_json", &t.vocab_json),
        ] {
            if let Some(p) = p {
                files.push((format!("model.tokenizer.{name}"), p));
            }
        }
    }
    let d = &cfg.data;
    for (name, p) in [
        ("professions", &d.professions),
        ("templates", &d.templates),
        ("winobias", &d.winobias),
        ("crows", &d.crows),
        ("corpus", &d.corpus),
        ("lexicon", &d.lexicon),
    ] {
        if let Some(p) = p {
            files.push((format!("data.{name}"), p));
        }
    }
    for (i, p) in d.seat.iter().enumerate() {
        files.push((format!("data.seat[{i}]"), p));
    }
    files
        .into_iter()
        .map(|(f, p)| InputDigest::of(f.clone(), p).ctx(&f))
        .collect()
}

/// Validates the config and loads every input without running.
pub fn validate(cfg: &ExperimentConfig) -> Result<(), RunError> {
    cfg.check()?;
    if cfg.kind != ExperimentKind::Cda {
        load_pair(cfg)?;
    }
    let d = &cfg.data;
    match cfg.kind {
        ExperimentKind::NeuronMediation => {
            load_professions(d.professions.as_ref().unwrap()).ctx("data.professions")?;
            load_templates(d.templates.as_ref().unwrap()).ctx("data.templates")?;
        }
        ExperimentKind::AttentionMediation => {
            load_winobias(d.winobias.as_ref().unwrap()).ctx("data.winobias")?;
        }
        ExperimentKind::Crows => {
            load_crows(d.crows.as_ref().unwrap()).ctx("data.crows")?;
        }
        ExperimentKind::Seat => {
            for p in &d.seat {
                load_seat(p).ctx("data.seat")?;
            }
        }
        ExperimentKind::Cda => {
            lexicon(cfg)?;
        }
    }
    Ok(())
}

fn lexicon(cfg: &ExperimentConfig) -> Result<WordPairLexicon, RunError> {
    match &cfg.data.lexicon {
        Some(p) => WordPairLexicon::parse(&fs::read_to_string(p).ctx("data.lexicon")?).ctx("data.lexicon"),
        None => Ok(WordPairLexicon::default_pairs()),
    }
}

/// Runs the configured pipeline and writes its outputs plus `manifest.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Manifest, RunError> {
    let start = Instant::now();
    cfg.check()?;
    let inputs = input_digests(cfg)?;
    let mut out = OutputDir::create(&cfg.output_dir).ctx("output_dir")?;
    let orientation = match cfg.kind {
        ExperimentKind::NeuronMediation => Some(neuron_mediation(cfg, &mut out)?),
        ExperimentKind::AttentionMediation => Some(attention_mediation(cfg, &mut out)?),
        ExperimentKind::Crows => crows(cfg, &mut out).map(|_| None)?,
        ExperimentKind::Seat => seat(cfg, &mut out).map(|_| None)?,
        ExperimentKind::Cda => cda(cfg, &mut out).map(|_| None)?,
    };
    let root = out.root().to_owned();
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        kind: cfg.kind,
        parameters: cfg.params.clone(),
        orientation,
        inputs,
        outputs: out.into_written(),
        wall_time_ms: start.elapsed().as_millis() as u64,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).ctx("manifest")?;
    bytes.push(b'\n');
    fs::write(root.join(MANIFEST_FILE), bytes).ctx("manifest")?;
    Ok(manifest)
}

fn num(x: f64) -> String {
    x.to_string()
}

fn mediation_err(e: MediationError) -> RunError {
    RunError::Pipeline(format!("mediation: {e}"))
}

fn write_skipped(out: &mut OutputDir, skipped: &[SkippedPrompt]) -> Result<(), RunError> {
    let rows = skipped.iter().map(|s| [s.prompt_id.clone(), s.reason.clone()]);
    out.write(
        "skipped.csv",
        &csv_bytes(&["prompt_id", "reason"], rows).ctx("skipped.csv")?,
    )
    .ctx("skipped.csv")
}

fn write_total_effects(out: &mut OutputDir, report: &EffectReport) -> Result<(), RunError> {
    let rows = report.records.iter().map(|r| {
        [
            r.prompt_id.clone(),
            r.gender_class.to_string(),
            num(r.y_null),
            num(r.y_intervened),
            num(r.effect),
        ]
    });
    let header = [
        "prompt_id",
        "gender_class",
        "y_null",
        "y_intervened",
        "total_effect",
    ];
    out.write(
        "total_effects.csv",
        &csv_bytes(&header, rows).ctx("total_effects.csv")?,
    )
    .ctx("total_effects.csv")?;
    let table =
        emit_plot_data(PlotSource::TotalEffects(report), PlotSchema::TotalEffectTable).ctx("plot data")?;
    out.write("total_effect_table.csv", &table)
        .ctx("total_effect_table.csv")
}

/// Per-site means, per-record effects, the top selection and its layer profile.
fn write_sites(
    out: &mut OutputDir,
    report: &SiteReport,
    index_name: &str,
    stem: &str,
    fraction: f64,
) -> Result<Vec<SiteSummary>, RunError> {
    let rows = report.sites.iter().map(|s| {
        [
            s.site.layer().to_string(),
            s.site.index().to_string(),
            num(s.mean_indirect),
            num(s.mean_direct),
            s.count.to_string(),
        ]
    });
    let header = [
        "layer",
        index_name,
        "mean_indirect_effect",
        "mean_direct_effect",
        "count",
    ];
    let file = format!("{stem}_effects.csv");
    out.write(&file, &csv_bytes(&header, rows).ctx(&file)?)
        .ctx(&file)?;

    let rows = report.records.iter().map(|r| {
        [
            r.prompt_id.clone(),
            r.gender_class.to_string(),
            r.site.layer().to_string(),
            r.site.index().to_string(),
            num(r.y_null),
            num(r.y_indirect),
            num(r.indirect_effect),
            num(r.y_direct),
            num(r.direct_effect),
        ]
    });
    let header = [
        "prompt_id",
        "gender_class",
        "layer",
        index_name,
        "y_null",
        "y_indirect",
        "indirect_effect",
        "y_direct",
        "direct_effect",
    ];
    let file = format!("{stem}_records.csv");
    out.write(&file, &csv_bytes(&header, rows).ctx(&file)?)
        .ctx(&file)?;

    let top = select_top_neurons(report, fraction).map_err(mediation_err)?;
    let rows = top.iter().enumerate().map(|(i, s)| {
        [
            (i + 1).to_string(),
            s.site.layer().to_string(),
            s.site.index().to_string(),
            num(s.mean_indirect),
        ]
    });
    let file = format!("top_{stem}s.csv");
    let header = ["rank", "layer", index_name, "mean_indirect_effect"];
    out.write(&file, &csv_bytes(&header, rows).ctx(&file)?)
        .ctx(&file)?;

    let profile = layer_profile(&top, report);
    let csv =
        emit_plot_data(PlotSource::LayerProfile(&profile), PlotSchema::LayerProfile).ctx("plot data")?;
    out.write("layer_profile.csv", &csv).ctx("layer_profile.csv")?;
    Ok(top)
}

#[derive(Serialize)]
struct MediationSummary<'a> {
    kind: ExperimentKind,
    orientation: &'static str,
    pairs: usize,
    skipped: usize,
    total_effect: medlab_core::mediation::TotalEffectSummary,
    top_fraction: f64,
    top_sites: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    heatmaps: Option<&'a [String]>,
}

fn neuron_mediation(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<String, RunError> {
    let Loaded { model, tokenizer } = load_pair(cfg)?;
    let d = &cfg.data;
    let professions = load_professions(d.professions.as_ref().unwrap()).ctx("data.professions")?;
    let templates = load_templates(d.templates.as_ref().unwrap()).ctx("data.templates")?;
    let words = GenderWords::default();
    let (pairs, skipped) =
        profession_grid(&tokenizer, &templates, &professions, &words).map_err(mediation_err)?;
    if pairs.is_empty() {
        return Err(RunError::Pipeline(format!(
            "no usable prompts: all {} were skipped",
            skipped.len()
        )));
    }
    let te = total_effects(&model, &pairs, skipped.clone()).map_err(mediation_err)?;
    let sites = neuron_sweep(&model, &pairs, skipped.clone()).map_err(mediation_err)?;
    write_total_effects(out, &te)?;
    write_skipped(out, &skipped)?;
    let top = write_sites(out, &sites, "unit", "neuron", cfg.params.top_fraction)?;
    let label = te.orientation.label();
    out.write_json(
        "report.json",
        &MediationSummary {
            kind: cfg.kind,
            orientation: label,
            pairs: pairs.len(),
            skipped: skipped.len(),
            total_effect: te.summary(),
            top_fraction: cfg.params.top_fraction,
            top_sites: top.iter().map(|s| s.site.to_string()).collect(),
            heatmaps: None,
        },
    )
    .ctx("report.json")?;
    Ok(label.to_owned())
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn attention_mediation(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<String, RunError> {
    let Loaded { model, tokenizer } = load_pair(cfg)?;
    let rows = load_winobias(cfg.data.winobias.as_ref().unwrap()).ctx("data.winobias")?;
    let words = GenderWords::default();
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let built = PromptInstance::continuation(&tokenizer, i, &row.prompt, &row.stereo, &row.anti, &words)
            .and_then(|p| InterventionPair::swap_pronoun(&tokenizer, p, &row.swapped_pronoun));
        match built {
            Ok(p) => pairs.push(p),
            Err(e @ (MediationError::PromptMismatch(_) | MediationError::SubjectAlignment(_))) => skipped
                .push(SkippedPrompt {
                    prompt_id: format!("w{i}"),
                    reason: e.to_string(),
                }),
            Err(e) => return Err(RunError::Pipeline(format!("winobias row {}: {e}", i + 1))),
        }
    }
    if pairs.is_empty() {
        return Err(RunError::Pipeline("no usable prompts".into()));
    }
    let te = total_effects(&model, &pairs, skipped.clone()).map_err(mediation_err)?;
    let sites = attention_sweep(&model, &pairs, skipped.clone()).map_err(mediation_err)?;
    write_total_effects(out, &te)?;
    write_skipped(out, &skipped)?;
    let top = write_sites(out, &sites, "head", "head", cfg.params.top_fraction)?;
    let heads: Vec<_> = top.iter().map(|s| s.site).collect();
    let mut heatmaps = Vec::new();
    for pair in &pairs {
        for (prompt, suffix) in [(&pair.null, ""), (&pair.intervened, "-swapped")] {
            let weights =
                attention_weight_report(&model, &tokenizer, prompt, &heads).map_err(mediation_err)?;
            let csv = emit_plot_data(
                PlotSource::AttentionWeights(&weights),
                PlotSchema::AttentionHeatmap,
            )
            .ctx("plot data")?;
            let file = format!("attention_heatmap/{}{suffix}.csv", file_stem(pair.id()));
            out.write(&file, &csv).ctx(&file)?;
            heatmaps.push(file);
        }
    }
    let label = te.orientation.label();
    out.write_json(
        "report.json",
        &MediationSummary {
            kind: cfg.kind,
            orientation: label,
            pairs: pairs.len(),
            skipped: skipped.len(),
            total_effect: te.summary(),
            top_fraction: cfg.params.top_fraction,
            top_sites: top.iter().map(|s| s.site.to_string()).collect(),
            heatmaps: Some(&heatmaps),
        },
    )
    .ctx("report.json")?;
    Ok(label.to_owned())
}

fn crows(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), RunError> {
    let Loaded { model, tokenizer } = load_pair(cfg)?;
    let pairs = load_crows(cfg.data.crows.as_ref().unwrap()).ctx("data.crows")?;
    let result = crows_score(&model, &tokenizer, &pairs).ctx("crows")?;
    let rows = pairs.iter().zip(&result.pairs).enumerate().map(|(i, (p, s))| {
        [
            i.to_string(),
            p.category.clone(),
            num(s.pll_stereo),
            num(s.pll_anti),
        ]
    });
    let header = ["index", "category", "pll_stereo", "pll_anti"];
    out.write(
        "crows_pairs.csv",
        &csv_bytes(&header, rows).ctx("crows_pairs.csv")?,
    )
    .ctx("crows_pairs.csv")?;
    #[derive(Serialize)]
    struct Summary {
        score: f64,
        n: usize,
        stereo_wins: usize,
        ties: usize,
    }
    out.write_json(
        "report.json",
        &Summary {
            score: result.score,
            n: result.n,
            stereo_wins: result.stereo_wins,
            ties: result.ties,
        },
    )
    .ctx("report.json")
}

fn seat(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), RunError> {
    let Loaded { model, tokenizer } = load_pair(cfg)?;
    let pooling = cfg
        .params
        .pooling
        .unwrap_or_else(|| Pooling::default_for(model.config().family));
    let mut results = Vec::new();
    for p in &cfg.data.seat {
        let sets = load_seat(p).ctx("data.seat")?;
        results.push(seat_test(&model, &tokenizer, &sets, pooling, cfg.params.permutation).ctx(&sets.name)?);
    }
    let rows = results.iter().map(|r| {
        [
            r.name.clone(),
            num(r.effect_size),
            num(r.p_value),
            r.x_scores.len().to_string(),
            r.y_scores.len().to_string(),
        ]
    });
    let header = ["test", "effect_size", "p_value", "n_x", "n_y"];
    out.write(
        "seat_results.csv",
        &csv_bytes(&header, rows).ctx("seat_results.csv")?,
    )
    .ctx("seat_results.csv")?;
    out.write_json("report.json", &results).ctx("report.json")
}

fn cda(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), RunError> {
    let lex = lexicon(cfg)?;
    let input = File::open(cfg.data.corpus.as_ref().unwrap()).ctx("data.corpus")?;
    let mut augmented = Vec::new();
    let stats =
        augment_corpus(BufReader::new(input), &mut augmented, &lex, cfg.params.cda_mode).ctx("cda")?;
    out.write("augmented.txt", &augmented).ctx("augmented.txt")?;
    out.write_json("cda_stats.json", &stats).ctx("cda_stats.json")
}
