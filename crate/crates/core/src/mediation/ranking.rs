// SPDX-License-Identifier: MIT OR Apache-2.0

//! Top-site selection, per-layer profiles and attention weight rows.

use serde::Serialize;

use super::effects::{Site, SiteReport, SiteSummary, SplitMean};
use super::prompts::PromptInstance;
use super::MediationError;
use crate::engine::{EngineError, Model};
use crate::text::Tokenizer;

/// Slack for `fraction × n` landing a hair above an integer.
const CEIL_SLACK: f64 = 1e-9;

/// The top `ceil(fraction × n)` sites by mean indirect effect, descending,
/// ties broken by site order.
pub fn select_top_neurons(report: &SiteReport, fraction: f64) -> Result<Vec<SiteSummary>, MediationError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(MediationError::InvalidFraction(fraction));
    }
    let n = report.sites.len();
    if n == 0 {
        return Err(MediationError::EmptyReport);
    }
    let k = ((fraction * n as f64 - CEIL_SLACK).ceil() as usize).clamp(1, n);
    let mut ranked = report.sites.clone();
    ranked.sort_by(|a, b| {
        b.mean_indirect
            .total_cmp(&a.mean_indirect)
            .then_with(|| a.site.cmp(&b.site))
    });
    ranked.truncate(k);
    Ok(ranked)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerBucket {
    pub layer: usize,
    /// 0 when `count` is 0.
    pub mean_indirect: f64,
    pub count: usize,
}

/// Mean indirect effect of the selected sites per layer, one bucket for every
/// layer of the report.
pub fn layer_profile(top: &[SiteSummary], report: &SiteReport) -> Vec<LayerBucket> {
    let layers = report
        .layer_count
        .max(top.iter().map(|s| s.site.layer() + 1).max().unwrap_or(0));
    (0..layers)
        .map(|layer| {
            let m = SplitMean::of(
                top.iter()
                    .filter(|s| s.site.layer() == layer)
                    .map(|s| s.mean_indirect),
            );
            LayerBucket {
                layer,
                mean_indirect: m.mean,
                count: m.count,
            }
        })
        .collect()
}

/// One head's attention from the final prompt position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeadWeights {
    /// `layer-head`
    pub label: String,
    pub tokens: Vec<String>,
    pub weights: Vec<f64>,
}

/// Final-position attention rows of `heads` on `prompt`.
pub fn attention_weight_report(
    model: &Model,
    tokenizer: &Tokenizer,
    prompt: &PromptInstance,
    heads: &[Site],
) -> Result<Vec<HeadWeights>, MediationError> {
    let trace = model.forward(&prompt.ids)?;
    let last = prompt.ids.len() - 1;
    let tokens = prompt
        .ids
        .iter()
        .map(|&id| tokenizer.token_text(id))
        .collect::<Result<Vec<_>, _>>()?;
    heads
        .iter()
        .map(|&site| {
            let Site::Head { layer, head } = site else {
                return Err(EngineError::BadSite(format!("{site:?} is not a head")).into());
            };
            let probs = trace
                .attention_probs
                .get(layer)
                .and_then(|l| l.get(head))
                .ok_or_else(|| EngineError::BadSite(format!("{site:?} is outside the model")))?;
            Ok(HeadWeights {
                label: site.to_string(),
                tokens: tokens.clone(),
                weights: probs.row(last).to_vec(),
            })
        })
        .collect()
}
