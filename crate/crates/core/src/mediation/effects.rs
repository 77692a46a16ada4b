// SPDX-License-Identifier: MIT OR Apache-2.0

//! Bias ratio, total effects and site-level direct / indirect effects.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use super::prompts::{Candidates, GenderClass, InterventionPair, Orientation, PromptInstance, SkippedPrompt};
use super::MediationError;
use crate::engine::{log_softmax, ActivationTrace, EngineError, Family, InterventionSpec, Model};
use crate::text::TokenId;

/// A mediator: one residual-stream unit or one attention head.
///
/// Neuron `layer` 0 is the embedding output; head `layer` indexes blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Site {
    Neuron { layer: usize, unit: usize },
    Head { layer: usize, head: usize },
}

impl Site {
    pub fn layer(self) -> usize {
        match self {
            Self::Neuron { layer, .. } | Self::Head { layer, .. } => layer,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Self::Neuron { unit, .. } => unit,
            Self::Head { head, .. } => head,
        }
    }

    /// Every neuron site of `model`, layer-major.
    pub fn all_neurons(model: &Model) -> Vec<Self> {
        let c = model.config();
        (0..=c.n_layers)
            .flat_map(|layer| (0..c.d_model).map(move |unit| Self::Neuron { layer, unit }))
            .collect()
    }

    /// Every attention head of `model`, layer-major.
    pub fn all_heads(model: &Model) -> Vec<Self> {
        let c = model.config();
        (0..c.n_layers)
            .flat_map(|layer| (0..c.n_heads).map(move |head| Self::Head { layer, head }))
            .collect()
    }

    fn check(self, model: &Model) -> Result<(), MediationError> {
        let c = model.config();
        let ok = match self {
            Self::Neuron { layer, unit } => layer <= c.n_layers && unit < c.d_model,
            Self::Head { layer, head } => layer < c.n_layers && head < c.n_heads,
        };
        if ok {
            Ok(())
        } else {
            Err(EngineError::BadSite(format!("{self:?} is outside the model")).into())
        }
    }
}

/// `layer-index`, e.g. `0-2` for head 2 of layer 0.
impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.layer(), self.index())
    }
}

/// `(y_intervened − y_null) / y_null`.
pub fn relative_change(y_null: f64, y_intervened: f64) -> f64 {
    (y_intervened - y_null) / y_null
}

fn check_candidates(model: &Model, candidates: &Candidates) -> Result<(), MediationError> {
    let vocab = model.config().vocab_size;
    let all = candidates.stereo().into_iter().chain(candidates.anti());
    for id in all {
        if id as usize >= vocab {
            return Err(MediationError::BadCandidate(format!(
                "candidate token {id} outside vocabulary of {vocab}"
            )));
        }
    }
    Ok(())
}

/// `y` for `ids` under `candidates`. `spec_for(ext)` supplies the
/// intervention for the pass over `ids ++ ext`, where `ext` is the part of a
/// continuation fed back as input (empty for pronouns).
fn score<F>(
    model: &Model,
    ids: &[TokenId],
    candidates: &Candidates,
    spec_for: F,
) -> Result<f64, MediationError>
where
    F: Fn(&[TokenId]) -> Result<InterventionSpec, MediationError>,
{
    if model.config().family != Family::Causal {
        return Err(EngineError::WrongFamily.into());
    }
    check_candidates(model, candidates)?;
    let log_y = match candidates {
        Candidates::Pronouns { stereo, anti } => {
            let trace = model.forward_trace(ids, &spec_for(&[])?)?;
            let lp = log_softmax(trace.logits.row(ids.len() - 1));
            lp[*anti as usize] - lp[*stereo as usize]
        }
        Candidates::Continuations { stereo, anti } => {
            let lp = |c: &[TokenId]| -> Result<f64, MediationError> {
                Ok(model.continuation_log_prob(ids, c, &spec_for(&c[..c.len() - 1])?)?)
            };
            lp(stereo)? - lp(anti)?
        }
    };
    let y = log_y.exp();
    if !(y.is_finite() && y > 0.0) {
        return Err(
            EngineError::NumericError(format!("bias ratio exp({log_y}) is not a positive real")).into(),
        );
    }
    Ok(y)
}

fn no_intervention(_: &[TokenId]) -> Result<InterventionSpec, MediationError> {
    Ok(InterventionSpec::none())
}

/// `y(u)`, oriented by the prompt's candidate kind (see [`Orientation`]).
pub fn bias_ratio(model: &Model, prompt: &PromptInstance) -> Result<f64, MediationError> {
    score(model, &prompt.ids, &prompt.candidates, no_intervention)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectRecord {
    pub prompt_id: String,
    pub gender_class: GenderClass,
    pub y_null: f64,
    pub y_intervened: f64,
    pub effect: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub site: Option<Site>,
}

impl EffectRecord {
    fn new(pair: &InterventionPair, y_null: f64, y_intervened: f64, site: Option<Site>) -> Self {
        Self {
            prompt_id: pair.id().to_owned(),
            gender_class: pair.gender_class(),
            y_null,
            y_intervened,
            effect: relative_change(y_null, y_intervened),
            site,
        }
    }
}

/// Effect of the input intervention itself: `y(intervened)` against `y(null)`.
pub fn total_effect(model: &Model, pair: &InterventionPair) -> Result<EffectRecord, MediationError> {
    let y_null = bias_ratio(model, &pair.null)?;
    let y_set = score(
        model,
        &pair.intervened.ids,
        &pair.null.candidates,
        no_intervention,
    )?;
    Ok(EffectRecord::new(pair, y_null, y_set, None))
}

fn neuron_parts(site: Site) -> Result<(usize, usize), MediationError> {
    match site {
        Site::Neuron { layer, unit } => Ok((layer, unit)),
        Site::Head { .. } => Err(EngineError::BadSite(format!("{site:?} is not a neuron")).into()),
    }
}

fn head_parts(site: Site) -> Result<(usize, usize), MediationError> {
    match site {
        Site::Head { layer, head } => Ok((layer, head)),
        Site::Neuron { .. } => Err(EngineError::BadSite(format!("{site:?} is not a head")).into()),
    }
}

/// `y` of `ids` with the neuron at `site` and `position` set to `value`.
fn y_neuron_set(
    model: &Model,
    ids: &[TokenId],
    candidates: &Candidates,
    site: Site,
    position: usize,
    value: f64,
) -> Result<f64, MediationError> {
    let (layer, unit) = neuron_parts(site)?;
    score(model, ids, candidates, |_| {
        Ok(InterventionSpec::neuron(layer, position, unit, value))
    })
}

/// Null prompt with the neuron overridden by its value from the intervened run.
pub fn neuron_indirect_effect(
    model: &Model,
    pair: &InterventionPair,
    site: Site,
) -> Result<EffectRecord, MediationError> {
    let (layer, unit) = neuron_parts(site)?;
    site.check(model)?;
    let pos = pair.null.intervention_position();
    let value = model.forward(&pair.intervened.ids)?.neuron(layer, pos, unit);
    let y_null = bias_ratio(model, &pair.null)?;
    let y = y_neuron_set(model, &pair.null.ids, &pair.null.candidates, site, pos, value)?;
    Ok(EffectRecord::new(pair, y_null, y, Some(site)))
}

/// Intervened prompt with the neuron clamped to its null-run value.
pub fn neuron_direct_effect(
    model: &Model,
    pair: &InterventionPair,
    site: Site,
) -> Result<EffectRecord, MediationError> {
    let (layer, unit) = neuron_parts(site)?;
    site.check(model)?;
    let pos = pair.null.intervention_position();
    let value = model.forward(&pair.null.ids)?.neuron(layer, pos, unit);
    let y_null = bias_ratio(model, &pair.null)?;
    let y = y_neuron_set(
        model,
        &pair.intervened.ids,
        &pair.null.candidates,
        site,
        pos,
        value,
    )?;
    Ok(EffectRecord::new(pair, y_null, y, Some(site)))
}

fn joined(ids: &[TokenId], ext: &[TokenId]) -> Vec<TokenId> {
    let mut seq = ids.to_vec();
    seq.extend_from_slice(ext);
    seq
}

/// `y` of `target` with head `site` replaced by its probabilities on `source`.
fn y_head_from(
    model: &Model,
    target: &[TokenId],
    source: &[TokenId],
    candidates: &Candidates,
    site: Site,
) -> Result<f64, MediationError> {
    let (layer, head) = head_parts(site)?;
    site.check(model)?;
    if target.len() != source.len() {
        return Err(MediationError::PromptMismatch(format!(
            "prompts have {} and {} tokens",
            target.len(),
            source.len()
        )));
    }
    score(model, target, candidates, |ext| {
        let trace = model.forward(&joined(source, ext))?;
        Ok(InterventionSpec::attention(
            layer,
            head,
            trace.attention_probs[layer][head].clone(),
        ))
    })
}

/// Original prompt with one head's attention taken from the swapped prompt.
pub fn attention_indirect_effect(
    model: &Model,
    pair: &InterventionPair,
    site: Site,
) -> Result<EffectRecord, MediationError> {
    let y = y_head_from(
        model,
        &pair.null.ids,
        &pair.intervened.ids,
        &pair.null.candidates,
        site,
    )?;
    let y_null = bias_ratio(model, &pair.null)?;
    Ok(EffectRecord::new(pair, y_null, y, Some(site)))
}

/// Swapped prompt with one head's attention held at the original prompt's.
pub fn attention_direct_effect(
    model: &Model,
    pair: &InterventionPair,
    site: Site,
) -> Result<EffectRecord, MediationError> {
    let y = y_head_from(
        model,
        &pair.intervened.ids,
        &pair.null.ids,
        &pair.null.candidates,
        site,
    )?;
    let y_null = bias_ratio(model, &pair.null)?;
    Ok(EffectRecord::new(pair, y_null, y, Some(site)))
}

/// Arithmetic mean of a group of effects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitMean {
    /// 0 when `count` is 0.
    pub mean: f64,
    pub count: usize,
}

impl SplitMean {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let (sum, count) = values.into_iter().fold((0.0, 0), |(s, n), v| (s + v, n + 1));
        Self {
            mean: if count == 0 { 0.0 } else { sum / count as f64 },
            count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TotalEffectSummary {
    pub overall: SplitMean,
    pub male: SplitMean,
    pub female: SplitMean,
}

/// Per-prompt total effects.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectReport {
    pub orientation: Orientation,
    pub records: Vec<EffectRecord>,
    pub skipped: Vec<SkippedPrompt>,
}

impl EffectReport {
    pub fn summary(&self) -> TotalEffectSummary {
        let split = |class: Option<GenderClass>| {
            SplitMean::of(
                self.records
                    .iter()
                    .filter(|r| class.is_none_or(|c| r.gender_class == c))
                    .map(|r| r.effect),
            )
        };
        TotalEffectSummary {
            overall: split(None),
            male: split(Some(GenderClass::Male)),
            female: split(Some(GenderClass::Female)),
        }
    }
}

fn in_prompt(pair: &InterventionPair) -> impl FnOnce(MediationError) -> MediationError + '_ {
    move |e| MediationError::InPrompt {
        prompt: pair.id().to_owned(),
        source: Box::new(e),
    }
}

fn common_orientation(pairs: &[InterventionPair]) -> Result<Orientation, MediationError> {
    let first = pairs
        .first()
        .ok_or(MediationError::EmptyReport)?
        .null
        .orientation();
    if let Some(p) = pairs.iter().find(|p| p.null.orientation() != first) {
        return Err(MediationError::BadCandidate(format!(
            "prompt {} uses a different orientation from the rest",
            p.id()
        )));
    }
    Ok(first)
}

/// Total effect of every pair, in input order.
pub fn total_effects(
    model: &Model,
    pairs: &[InterventionPair],
    skipped: Vec<SkippedPrompt>,
) -> Result<EffectReport, MediationError> {
    let orientation = common_orientation(pairs)?;
    let records = pairs
        .par_iter()
        .map(|p| total_effect(model, p).map_err(in_prompt(p)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EffectReport {
        orientation,
        records,
        skipped,
    })
}

/// Indirect and direct effect of one site on one prompt pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteRecord {
    pub prompt_id: String,
    pub gender_class: GenderClass,
    pub site: Site,
    pub y_null: f64,
    pub y_indirect: f64,
    pub indirect_effect: f64,
    pub y_direct: f64,
    pub direct_effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteSummary {
    pub site: Site,
    pub mean_indirect: f64,
    pub mean_direct: f64,
    pub count: usize,
}

/// Site-level effects over a prompt set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteReport {
    pub orientation: Orientation,
    /// Number of layer buckets: `n_layers + 1` for neurons, `n_layers` for heads.
    pub layer_count: usize,
    /// One entry per swept site, in sweep order.
    pub sites: Vec<SiteSummary>,
    /// Pair-major, site-minor.
    pub records: Vec<SiteRecord>,
    pub skipped: Vec<SkippedPrompt>,
}

impl SiteReport {
    /// Builds summaries from records. Means are taken in record order.
    pub fn from_records(
        orientation: Orientation,
        layer_count: usize,
        sites: &[Site],
        records: Vec<SiteRecord>,
        skipped: Vec<SkippedPrompt>,
    ) -> Self {
        let sites = sites
            .iter()
            .map(|&site| {
                let mine = || records.iter().filter(move |r| r.site == site);
                let ie = SplitMean::of(mine().map(|r| r.indirect_effect));
                let de = SplitMean::of(mine().map(|r| r.direct_effect));
                SiteSummary {
                    site,
                    mean_indirect: ie.mean,
                    mean_direct: de.mean,
                    count: ie.count,
                }
            })
            .collect();
        Self {
            orientation,
            layer_count,
            sites,
            records,
            skipped,
        }
    }
}

/// Per-pair state shared by every site.
struct PairBase {
    y_null: f64,
    null: ActivationTrace,
    intervened: ActivationTrace,
}

fn site_record(
    model: &Model,
    pair: &InterventionPair,
    base: &PairBase,
    site: Site,
) -> Result<SiteRecord, MediationError> {
    let cands = &pair.null.candidates;
    let (y_indirect, y_direct) = match site {
        Site::Neuron { layer, unit } => {
            let pos = pair.null.intervention_position();
            let set_value = base.intervened.neuron(layer, pos, unit);
            let null_value = base.null.neuron(layer, pos, unit);
            (
                y_neuron_set(model, &pair.null.ids, cands, site, pos, set_value)?,
                y_neuron_set(model, &pair.intervened.ids, cands, site, pos, null_value)?,
            )
        }
        Site::Head { .. } => (
            y_head_from(model, &pair.null.ids, &pair.intervened.ids, cands, site)?,
            y_head_from(model, &pair.intervened.ids, &pair.null.ids, cands, site)?,
        ),
    };
    Ok(SiteRecord {
        prompt_id: pair.id().to_owned(),
        gender_class: pair.gender_class(),
        site,
        y_null: base.y_null,
        y_indirect,
        indirect_effect: relative_change(base.y_null, y_indirect),
        y_direct,
        direct_effect: relative_change(base.y_null, y_direct),
    })
}

/// Indirect and direct effects of every `(pair, site)`, evaluated in parallel.
pub fn sweep(
    model: &Model,
    pairs: &[InterventionPair],
    sites: &[Site],
    skipped: Vec<SkippedPrompt>,
) -> Result<SiteReport, MediationError> {
    let orientation = common_orientation(pairs)?;
    for s in sites {
        s.check(model)?;
    }
    for p in pairs {
        if p.null.ids.len() != p.intervened.ids.len() {
            return Err(MediationError::PromptMismatch(format!(
                "pair {} differs in length",
                p.id()
            )));
        }
    }
    let bases = pairs
        .par_iter()
        .map(|p| {
            let base = || -> Result<PairBase, MediationError> {
                Ok(PairBase {
                    y_null: bias_ratio(model, &p.null)?,
                    null: model.forward(&p.null.ids)?,
                    intervened: model.forward(&p.intervened.ids)?,
                })
            };
            base().map_err(in_prompt(p))
        })
        .collect::<Result<Vec<_>, MediationError>>()?;
    let jobs: Vec<(usize, Site)> = (0..pairs.len())
        .flat_map(|i| sites.iter().map(move |&s| (i, s)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(i, site)| site_record(model, &pairs[i], &bases[i], site).map_err(in_prompt(&pairs[i])))
        .collect::<Result<Vec<_>, _>>()?;
    let n = model.config().n_layers;
    let layer_count = if sites.iter().any(|s| matches!(s, Site::Neuron { .. })) {
        n + 1
    } else {
        n
    };
    Ok(SiteReport::from_records(
        orientation,
        layer_count,
        sites,
        records,
        skipped,
    ))
}

/// [`sweep`] over every neuron of the model.
pub fn neuron_sweep(
    model: &Model,
    pairs: &[InterventionPair],
    skipped: Vec<SkippedPrompt>,
) -> Result<SiteReport, MediationError> {
    sweep(model, pairs, &Site::all_neurons(model), skipped)
}

/// [`sweep`] over every attention head of the model.
pub fn attention_sweep(
    model: &Model,
    pairs: &[InterventionPair],
    skipped: Vec<SkippedPrompt>,
) -> Result<SiteReport, MediationError> {
    sweep(model, pairs, &Site::all_heads(model), skipped)
}
