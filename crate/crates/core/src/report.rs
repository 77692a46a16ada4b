// SPDX-License-Identifier: MIT OR Apache-2.0

//! Plot-ready CSV tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mediation::{EffectReport, HeadWeights, LayerBucket};
use crate::metrics::SeatResult;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("schema mismatch: {source_kind} cannot be rendered as {schema}")]
    SchemaError {
        source_kind: &'static str,
        schema: PlotSchema,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotSchema {
    /// `layer,mean_indirect_effect,count`
    LayerProfile,
    /// `head_label,token,weight`
    AttentionHeatmap,
    /// `split,mean_total_effect,count` with rows overall, male, female.
    TotalEffectTable,
}

impl PlotSchema {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::LayerProfile => "layer-profile",
            Self::AttentionHeatmap => "attention-heatmap",
            Self::TotalEffectTable => "total-effect-table",
        }
    }
}

impl fmt::Display for PlotSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlotSchema {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        [Self::LayerProfile, Self::AttentionHeatmap, Self::TotalEffectTable]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown plot schema `{s}`"))
    }
}

/// Anything [`emit_plot_data`] accepts.
#[derive(Debug, Clone, Copy)]
pub enum PlotSource<'a> {
    LayerProfile(&'a [LayerBucket]),
    AttentionWeights(&'a [HeadWeights]),
    TotalEffects(&'a EffectReport),
    Seat(&'a SeatResult),
}

impl PlotSource<'_> {
    fn kind(&self) -> &'static str {
        match self {
            Self::LayerProfile(_) => "layer profile",
            Self::AttentionWeights(_) => "attention weights",
            Self::TotalEffects(_) => "total-effect report",
            Self::Seat(_) => "SEAT result",
        }
    }
}

/// `x` with 9 significant digits, in the style of C's `%.9g`.
pub fn sig9(x: f64) -> String {
    const DIGITS: i32 = 9;
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s.to_owned()
        }
    };
    if (-4..DIGITS).contains(&exp) {
        trim(&format!("{:.*}", (DIGITS - 1 - exp) as usize, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    }
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?)
}

/// Renders `source` under `schema`; an empty source yields the header alone.
pub fn emit_plot_data(source: PlotSource<'_>, schema: PlotSchema) -> Result<Vec<u8>, ReportError> {
    match (source, schema) {
        (PlotSource::LayerProfile(buckets), PlotSchema::LayerProfile) => csv_bytes(
            &["layer", "mean_indirect_effect", "count"],
            buckets
                .iter()
                .map(|b| vec![b.layer.to_string(), sig9(b.mean_indirect), b.count.to_string()])
                .collect(),
        ),
        (PlotSource::AttentionWeights(heads), PlotSchema::AttentionHeatmap) => csv_bytes(
            &["head_label", "token", "weight"],
            heads
                .iter()
                .flat_map(|h| {
                    h.tokens
                        .iter()
                        .zip(&h.weights)
                        .map(|(t, w)| vec![h.label.clone(), t.clone(), sig9(*w)])
                })
                .collect(),
        ),
        (PlotSource::TotalEffects(report), PlotSchema::TotalEffectTable) => {
            let s = report.summary();
            csv_bytes(
                &["split", "mean_total_effect", "count"],
                [("overall", s.overall), ("male", s.male), ("female", s.female)]
                    .into_iter()
                    .map(|(name, m)| vec![name.to_owned(), sig9(m.mean), m.count.to_string()])
                    .collect(),
            )
        }
        (source, schema) => Err(ReportError::SchemaError {
            source_kind: source.kind(),
            schema,
        }),
    }
}
