// SPDX-License-Identifier: MIT OR Apache-2.0

//! Line-oriented input files for the mediation experiments.

use std::fs;
use std::path::Path;

use super::prompts::{GenderClass, PLACEHOLDER};
use super::MediationError;

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, MediationError> {
    let text = fs::read_to_string(path).map_err(|e| MediationError::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_owned()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> MediationError {
    MediationError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_professions(
    path: &Path,
    lines: Vec<(usize, String)>,
) -> Result<Vec<(String, GenderClass)>, MediationError> {
    lines
        .into_iter()
        .map(|(n, l)| {
            let (word, class) = l
                .split_once(',')
                .ok_or_else(|| parse_error(path, n, "expected `word,gender_class`"))?;
            let class = class.parse().map_err(|m: String| parse_error(path, n, m))?;
            let word = word.trim();
            if word.is_empty() {
                return Err(parse_error(path, n, "empty word"));
            }
            Ok((word.to_owned(), class))
        })
        .collect()
}

/// `word,gender_class` per line; blank lines and `#` comments are skipped.
pub fn load_professions(path: impl AsRef<Path>) -> Result<Vec<(String, GenderClass)>, MediationError> {
    let path = path.as_ref();
    parse_professions(path, read_lines(path)?)
}

/// One template per line, each containing the placeholder.
pub fn load_templates(path: impl AsRef<Path>) -> Result<Vec<String>, MediationError> {
    let path = path.as_ref();
    read_lines(path)?
        .into_iter()
        .map(|(n, l)| {
            if l.matches(PLACEHOLDER).count() == 1 {
                Ok(l)
            } else {
                Err(parse_error(
                    path,
                    n,
                    format!("template must contain {PLACEHOLDER} exactly once"),
                ))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WinoBiasRow {
    pub prompt: String,
    pub stereo: String,
    pub anti: String,
    pub swapped_pronoun: String,
}

/// `prompt|stereo_continuation|anti_continuation|swapped_pronoun` per line.
/// Square brackets marking entities in the prompt are dropped.
pub fn load_winobias(path: impl AsRef<Path>) -> Result<Vec<WinoBiasRow>, MediationError> {
    let path = path.as_ref();
    read_lines(path)?
        .into_iter()
        .map(|(n, l)| {
            let fields: Vec<&str> = l.split('|').map(str::trim).collect();
            let [prompt, stereo, anti, swapped] = fields[..] else {
                return Err(parse_error(
                    path,
                    n,
                    format!("expected 4 `|`-separated fields, got {}", fields.len()),
                ));
            };
            if fields.iter().any(|f| f.is_empty()) {
                return Err(parse_error(path, n, "empty field"));
            }
            Ok(WinoBiasRow {
                prompt: prompt.replace(['[', ']'], ""),
                stereo: stereo.to_owned(),
                anti: anti.to_owned(),
                swapped_pronoun: swapped.to_owned(),
            })
        })
        .collect()
}
