// SPDX-License-Identifier: MIT OR Apache-2.0

//! Prompt construction for the two intervention protocols.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::MediationError;
use crate::text::{TokenId, Tokenizer};

pub const PLACEHOLDER: &str = "[subject]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenderClass {
    Male,
    Female,
}

impl GenderClass {
    pub fn opposite(self) -> Self {
        match self {
            Self::Male => Self::Female,
            Self::Female => Self::Male,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Male => "male",
            Self::Female => "female",
        }
    }
}

impl fmt::Display for GenderClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for GenderClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" => Ok(Self::Male),
            "female" => Ok(Self::Female),
            other => Err(format!("unknown gender class `{other}`")),
        }
    }
}

/// Gendered subject words and pronouns used by the set-gender intervention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenderWords {
    pub male_subject: String,
    pub female_subject: String,
    pub male_pronoun: String,
    pub female_pronoun: String,
}

impl Default for GenderWords {
    fn default() -> Self {
        Self {
            male_subject: "man".into(),
            female_subject: "woman".into(),
            male_pronoun: "he".into(),
            female_pronoun: "she".into(),
        }
    }
}

impl GenderWords {
    pub fn subject(&self, class: GenderClass) -> &str {
        match class {
            GenderClass::Male => &self.male_subject,
            GenderClass::Female => &self.female_subject,
        }
    }

    pub fn pronoun(&self, class: GenderClass) -> &str {
        match class {
            GenderClass::Male => &self.male_pronoun,
            GenderClass::Female => &self.female_pronoun,
        }
    }

    /// The set-gender replacement for a profession stereotyped as `class`.
    pub fn anti_stereotypical_subject(&self, class: GenderClass) -> &str {
        self.subject(class.opposite())
    }

    pub fn classify_pronoun(&self, word: &str) -> Option<GenderClass> {
        let w = word.to_lowercase();
        if w == self.male_pronoun.to_lowercase() {
            Some(GenderClass::Male)
        } else if w == self.female_pronoun.to_lowercase() {
            Some(GenderClass::Female)
        } else {
            None
        }
    }
}

/// Which `y(u)` orientation a prompt uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Neuron protocol: `p(anti pronoun | u) / p(stereo pronoun | u)`.
    AntiOverStereo,
    /// Attention protocol: `p(stereo continuation | u) / p(anti continuation | u)`.
    StereoOverAnti,
}

impl Orientation {
    pub fn label(self) -> &'static str {
        match self {
            Self::AntiOverStereo => "anti/stereo",
            Self::StereoOverAnti => "stereo/anti",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Candidates {
    /// Single-token next-word pronouns.
    Pronouns { stereo: TokenId, anti: TokenId },
    /// Multi-token continuations.
    Continuations {
        stereo: Vec<TokenId>,
        anti: Vec<TokenId>,
    },
}

impl Candidates {
    pub fn orientation(&self) -> Orientation {
        match self {
            Self::Pronouns { .. } => Orientation::AntiOverStereo,
            Self::Continuations { .. } => Orientation::StereoOverAnti,
        }
    }

    pub(crate) fn stereo(&self) -> Vec<TokenId> {
        match self {
            Self::Pronouns { stereo, .. } => vec![*stereo],
            Self::Continuations { stereo, .. } => stereo.clone(),
        }
    }

    pub(crate) fn anti(&self) -> Vec<TokenId> {
        match self {
            Self::Pronouns { anti, .. } => vec![*anti],
            Self::Continuations { anti, .. } => anti.clone(),
        }
    }

    fn validate(&self) -> Result<(), MediationError> {
        let (s, a) = (self.stereo(), self.anti());
        if s.is_empty() || a.is_empty() || s == a {
            return Err(MediationError::BadCandidate(
                "candidates must be non-empty and distinct".into(),
            ));
        }
        Ok(())
    }
}

/// A rendered prompt `u` with its subject span and scoring candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptInstance {
    pub id: String,
    pub template_id: usize,
    pub template: String,
    pub subject: String,
    pub text: String,
    pub ids: Vec<TokenId>,
    /// Token span of the subject within `ids`.
    pub subject_positions: Range<usize>,
    pub candidates: Candidates,
    pub gender_class: GenderClass,
}

fn word_count(text: &str, word: &str) -> usize {
    let is_word = |c: Option<char>| c.is_some_and(char::is_alphanumeric);
    text.match_indices(word)
        .filter(|(i, w)| {
            !is_word(text[..*i].chars().next_back()) && !is_word(text[i + w.len()..].chars().next())
        })
        .count()
}

/// Renders `template` with `subject`, locating the subject's token span.
fn render(
    template: &str,
    subject: &str,
    tokenizer: &Tokenizer,
) -> Result<(String, Vec<TokenId>, Range<usize>), MediationError> {
    let (before, after) = template.split_once(PLACEHOLDER).ok_or_else(|| {
        MediationError::BadTemplate(format!("`{template}` has no {PLACEHOLDER} placeholder"))
    })?;
    if after.contains(PLACEHOLDER) {
        return Err(MediationError::BadTemplate(format!(
            "`{template}` has more than one placeholder"
        )));
    }
    let text = format!("{before}{subject}{after}");
    if word_count(&text, subject) != 1 {
        return Err(MediationError::BadTemplate(format!(
            "subject `{subject}` must occur exactly once in `{text}`"
        )));
    }
    let ids = tokenizer.encode(&text)?;
    let head = tokenizer.encode(before.trim_end())?;
    let through = tokenizer.encode(&format!("{before}{subject}"))?;
    let aligned = through.len() > head.len() && through.starts_with(&head) && ids.starts_with(&through);
    if !aligned {
        return Err(MediationError::SubjectAlignment(text));
    }
    Ok((text, ids, head.len()..through.len()))
}

impl PromptInstance {
    /// Neuron-protocol prompt: a template filled with a profession stereotyped
    /// as `class`; candidates are the stereotypical and anti-stereotypical pronouns.
    pub fn profession(
        tokenizer: &Tokenizer,
        template_id: usize,
        template: &str,
        profession: &str,
        class: GenderClass,
        words: &GenderWords,
    ) -> Result<Self, MediationError> {
        let single = |word: &str| -> Result<TokenId, MediationError> {
            match tokenizer.encode_continuation(word)?.as_slice() {
                [id] => Ok(*id),
                other => Err(MediationError::BadCandidate(format!(
                    "pronoun `{word}` tokenizes to {} tokens",
                    other.len()
                ))),
            }
        };
        let candidates = Candidates::Pronouns {
            stereo: single(words.pronoun(class))?,
            anti: single(words.pronoun(class.opposite()))?,
        };
        candidates.validate()?;
        let (text, ids, subject_positions) = render(template, profession, tokenizer)?;
        Ok(Self {
            id: format!("t{template_id}:{profession}"),
            template_id,
            template: template.to_owned(),
            subject: profession.to_owned(),
            text,
            ids,
            subject_positions,
            candidates,
            gender_class: class,
        })
    }

    /// Attention-protocol prompt whose final word is a gendered pronoun.
    pub fn continuation(
        tokenizer: &Tokenizer,
        id: usize,
        prompt: &str,
        stereo: &str,
        anti: &str,
        words: &GenderWords,
    ) -> Result<Self, MediationError> {
        let prompt = prompt.trim();
        let (head, last) = match prompt.rsplit_once(char::is_whitespace) {
            Some((h, l)) => (format!("{h} "), l),
            None => (String::new(), prompt),
        };
        let class = words.classify_pronoun(last).ok_or_else(|| {
            MediationError::BadTemplate(format!("prompt `{prompt}` does not end with a gendered pronoun"))
        })?;
        let template = format!("{head}{PLACEHOLDER}");
        let candidates = Candidates::Continuations {
            stereo: tokenizer.encode_continuation(stereo)?,
            anti: tokenizer.encode_continuation(anti)?,
        };
        candidates.validate()?;
        let (text, ids, subject_positions) = render(&template, last, tokenizer)?;
        Ok(Self {
            id: format!("w{id}"),
            template_id: id,
            template,
            subject: last.to_owned(),
            text,
            ids,
            subject_positions,
            candidates,
            gender_class: class,
        })
    }

    pub fn orientation(&self) -> Orientation {
        self.candidates.orientation()
    }

    /// Position of the subject's final token, where neuron interventions apply.
    pub fn intervention_position(&self) -> usize {
        self.subject_positions.end - 1
    }

    /// Re-renders this prompt with `subject` in place of the original.
    ///
    /// Fails with `ResubstitutionError` when the new subject changes the
    /// sequence length or moves the intervention position.
    pub fn resubstitute(&self, tokenizer: &Tokenizer, subject: &str) -> Result<Self, MediationError> {
        let (text, ids, subject_positions) = render(&self.template, subject, tokenizer)?;
        if ids.len() != self.ids.len() || subject_positions.end != self.subject_positions.end {
            return Err(MediationError::ResubstitutionError(format!(
                "`{}` -> `{text}` changes token alignment",
                self.text
            )));
        }
        Ok(Self {
            id: self.id.clone(),
            subject: subject.to_owned(),
            text,
            ids,
            subject_positions,
            ..self.clone()
        })
    }
}

/// A null prompt and its intervened counterpart with aligned tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionPair {
    pub null: PromptInstance,
    pub intervened: PromptInstance,
}

impl InterventionPair {
    /// Set-gender pair: the profession replaced by `gendered_subject`.
    pub fn set_gender(
        tokenizer: &Tokenizer,
        prompt: PromptInstance,
        gendered_subject: &str,
    ) -> Result<Self, MediationError> {
        let intervened = prompt.resubstitute(tokenizer, gendered_subject)?;
        Ok(Self {
            null: prompt,
            intervened,
        })
    }

    /// Pronoun-swap pair for the attention protocol.
    pub fn swap_pronoun(
        tokenizer: &Tokenizer,
        prompt: PromptInstance,
        swapped_pronoun: &str,
    ) -> Result<Self, MediationError> {
        let intervened = prompt
            .resubstitute(tokenizer, swapped_pronoun)
            .map_err(|e| match e {
                MediationError::ResubstitutionError(m) => MediationError::PromptMismatch(m),
                other => other,
            })?;
        Ok(Self {
            null: prompt,
            intervened,
        })
    }

    pub fn id(&self) -> &str {
        &self.null.id
    }

    pub fn gender_class(&self) -> GenderClass {
        self.null.gender_class
    }
}

/// Why a prompt was left out of an analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedPrompt {
    pub prompt_id: String,
    pub reason: String,
}

/// Every template × profession set-gender pair. Prompts whose substitution
/// breaks token alignment are skipped and reported; other errors abort.
pub fn profession_grid(
    tokenizer: &Tokenizer,
    templates: &[String],
    professions: &[(String, GenderClass)],
    words: &GenderWords,
) -> Result<(Vec<InterventionPair>, Vec<SkippedPrompt>), MediationError> {
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for (t, template) in templates.iter().enumerate() {
        for (profession, class) in professions {
            let built = PromptInstance::profession(tokenizer, t, template, profession, *class, words)
                .and_then(|p| {
                    InterventionPair::set_gender(tokenizer, p, words.anti_stereotypical_subject(*class))
                });
            match built {
                Ok(pair) => pairs.push(pair),
                Err(e @ (MediationError::ResubstitutionError(_) | MediationError::SubjectAlignment(_))) => {
                    skipped.push(SkippedPrompt {
                        prompt_id: format!("t{t}:{profession}"),
                        reason: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok((pairs, skipped))
}
