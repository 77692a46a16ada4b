// SPDX-License-Identifier: MIT OR Apache-2.0

//! The experiment config document and its validation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use medlab_core::cda::AugmentMode;
use medlab_core::metrics::{PermutationMode, Pooling};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("`{field}` is required for kind {kind}")]
    MissingField {
        field: &'static str,
        kind: ExperimentKind,
    },
    #[error("`{field}`: {path} does not exist")]
    MissingFile { field: String, path: String },
    #[error("`{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    NeuronMediation,
    AttentionMediation,
    Crows,
    Seat,
    Cda,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::NeuronMediation => "neuron-mediation",
            Self::AttentionMediation => "attention-mediation",
            Self::Crows => "crows",
            Self::Seat => "seat",
            Self::Cda => "cda",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerPaths {
    /// Whitespace vocabulary file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    /// Byte-level BPE merges and vocabulary JSON.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merges: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_json: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPaths {
    pub archive: PathBuf,
    pub config: PathBuf,
    pub tokenizer: TokenizerPaths,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub professions: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winobias: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crows: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seat: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// Defaults to the bundled pair list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
}

fn default_fraction() -> f64 {
    0.025
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default = "default_fraction")]
    pub top_fraction: f64,
    /// Defaults by model family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pooling: Option<Pooling>,
    #[serde(default = "default_permutation")]
    pub permutation: PermutationMode,
    #[serde(default = "default_cda_mode")]
    pub cda_mode: AugmentMode,
}

fn default_permutation() -> PermutationMode {
    PermutationMode::Exact
}

fn default_cda_mode() -> AugmentMode {
    AugmentMode::TwoSided
}

impl Default for Params {
    fn default() -> Self {
        Self {
            top_fraction: default_fraction(),
            pooling: None,
            permutation: default_permutation(),
            cda_mode: default_cda_mode(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelPaths>,
    #[serde(default)]
    pub data: DataPaths,
    #[serde(default)]
    pub params: Params,
    pub output_dir: PathBuf,
}

fn require<'a, T>(v: &'a Option<T>, field: &'static str, kind: ExperimentKind) -> Result<&'a T, ConfigError> {
    v.as_ref().ok_or(ConfigError::MissingField { field, kind })
}

fn exists(field: &str, path: &Path) -> Result<(), ConfigError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(ConfigError::MissingFile {
            field: field.to_owned(),
            path: path.display().to_string(),
        })
    }
}

impl ExperimentConfig {
    /// Reads a config; relative paths resolve against the config's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(m) = &mut self.model {
            fix(&mut m.archive);
            fix(&mut m.config);
            for p in [
                &mut m.tokenizer.vocab,
                &mut m.tokenizer.merges,
                &mut m.tokenizer.vocab_json,
            ]
            .into_iter()
            .flatten()
            {
                fix(p);
            }
        }
        let d = &mut self.data;
        for p in [
            &mut d.professions,
            &mut d.templates,
            &mut d.winobias,
            &mut d.crows,
            &mut d.corpus,
            &mut d.lexicon,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        d.seat.iter_mut().for_each(fix);
        fix(&mut self.output_dir);
    }

    /// Kind-specific fields are present and every referenced file exists.
    pub fn check(&self) -> Result<(), ConfigError> {
        let kind = self.kind;
        if kind != ExperimentKind::Cda {
            let m = require(&self.model, "model", kind)?;
            exists("model.archive", &m.archive)?;
            exists("model.config", &m.config)?;
            match (&m.tokenizer.vocab, &m.tokenizer.merges, &m.tokenizer.vocab_json) {
                (Some(v), None, None) => exists("model.tokenizer.vocab", v)?,
                (None, Some(mg), Some(vj)) => {
                    exists("model.tokenizer.merges", mg)?;
                    exists("model.tokenizer.vocab_json", vj)?;
                }
                _ => {
                    return Err(ConfigError::Invalid {
                        field: "model.tokenizer",
                        message: "give either `vocab` or both `merges` and `vocab_json`".into(),
                    })
                }
            }
        }
        let d = &self.data;
        match kind {
            ExperimentKind::NeuronMediation => {
                exists(
                    "data.professions",
                    require(&d.professions, "data.professions", kind)?,
                )?;
                exists("data.templates", require(&d.templates, "data.templates", kind)?)?;
            }
            ExperimentKind::AttentionMediation => {
                exists("data.winobias", require(&d.winobias, "data.winobias", kind)?)?;
            }
            ExperimentKind::Crows => exists("data.crows", require(&d.crows, "data.crows", kind)?)?,
            ExperimentKind::Seat => {
                if d.seat.is_empty() {
                    return Err(ConfigError::MissingField {
                        field: "data.seat",
                        kind,
                    });
                }
                for (i, p) in d.seat.iter().enumerate() {
                    exists(&format!("data.seat[{i}]"), p)?;
                }
            }
            ExperimentKind::Cda => {
                exists("data.corpus", require(&d.corpus, "data.corpus", kind)?)?;
                if let Some(l) = &d.lexicon {
                    exists("data.lexicon", l)?;
                }
            }
        }
        let f = self.params.top_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(ConfigError::Invalid {
                field: "params.top_fraction",
                message: format!("{f} outside (0, 1]"),
            });
        }
        if let PermutationMode::Sampled { n: 0, .. } = self.params.permutation {
            return Err(ConfigError::Invalid {
                field: "params.permutation",
                message: "sampled mode needs n ≥ 1".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(json: &str) -> Result<ExperimentConfig, ConfigError> {
        serde_json::from_str(json).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    #[test]
    fn defaults_and_kinds() {
        let c = parse(r#"{"kind": "cda", "data": {"corpus": "c.txt"}, "output_dir": "out"}"#).unwrap();
        assert_eq!(c.params.top_fraction, 0.025);
        assert_eq!(c.params.cda_mode, AugmentMode::TwoSided);
        assert!(parse(r#"{"kind": "plot", "output_dir": "o"}"#).is_err());
        assert!(parse(r#"{"kind": "cda", "output_dir": "o", "typo": 1}"#).is_err());
    }

    #[test]
    fn missing_dataset_names_field() {
        let c = parse(r#"{"kind": "cda", "output_dir": "o"}"#).unwrap();
        let err = c.check().unwrap_err().to_string();
        assert!(err.contains("data.corpus"), "{err}");
    }

    #[test]
    fn permutation_param() {
        let c = parse(
            r#"{"kind": "seat", "params": {"permutation": {"mode": "sampled", "n": 100, "seed": 3}}, "output_dir": "o"}"#,
        )
        .unwrap();
        assert_eq!(c.params.permutation, PermutationMode::Sampled { n: 100, seed: 3 });
    }
}
