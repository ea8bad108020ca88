//! From scores to binary labels: threshold selection and the combination of
//! per-variate information into one label per timestamp.
//!
//! A stamp is positive when its score is strictly greater than the
//! threshold, so a run of tied scores never produces positives by itself.

mod pot;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{write_labels, DataError};
use crate::metrics::{Confusion, Metric};
use crate::scoring::ScoreSeries;

pub use pot::{fit_gpd, threshold_pot, GpdFit};

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("invalid threshold spec: {0}")]
    InvalidSpec(String),
    #[error("no scores")]
    Empty,
    #[error("validation labels must contain both classes")]
    SingleClass,
    #[error("{got} labels for {expected} scores")]
    LengthMismatch { expected: usize, got: usize },
    #[error("only {found} excesses over the initial level {init_level}; lower init_level")]
    TooFewExcesses { found: usize, init_level: f64 },
    #[error("POT fit failed: {0}")]
    FitFailed(String),
    #[error("{0} requires {1}")]
    MissingInput(&'static str, &'static str),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("metadata: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    ValidationBest,
    Percentile,
    #[default]
    Pot,
}

impl ThresholdMethod {
    pub fn name(self) -> &'static str {
        match self {
            ThresholdMethod::ValidationBest => "validation_best",
            ThresholdMethod::Percentile => "percentile",
            ThresholdMethod::Pot => "pot",
        }
    }
}

/// Which scores a percentile or POT threshold is estimated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitOn {
    /// The scores being labelled.
    #[default]
    Scored,
    /// Scores of the (nominally normal) training split.
    Train,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdSpec {
    pub method: ThresholdMethod,
    /// Anomalous fraction for the percentile method.
    pub f: f64,
    /// POT risk level.
    pub q: f64,
    /// POT initial quantile level.
    pub init_level: f64,
    /// Target of the validation sweep.
    pub metric: Metric,
    pub fit_on: FitOn,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        Self {
            method: ThresholdMethod::Pot,
            f: 0.01,
            q: 1e-3,
            init_level: 0.98,
            metric: Metric::Mcc,
            fit_on: FitOn::Scored,
        }
    }
}

impl ThresholdSpec {
    pub fn pot() -> Self {
        Self::default()
    }

    pub fn percentile(f: f64) -> Self {
        Self {
            method: ThresholdMethod::Percentile,
            f,
            ..Self::default()
        }
    }

    pub fn validation_best(metric: Metric) -> Self {
        Self {
            method: ThresholdMethod::ValidationBest,
            metric,
            ..Self::default()
        }
    }

    pub fn fit_on(mut self, fit_on: FitOn) -> Self {
        self.fit_on = fit_on;
        self
    }

    pub fn validate(&self) -> Result<(), LabelError> {
        match self.method {
            ThresholdMethod::Percentile if !(self.f > 0.0 && self.f < 1.0) => Err(LabelError::InvalidSpec(format!(
                "fraction f={} must lie in (0, 1)",
                self.f
            ))),
            ThresholdMethod::Pot
                if !(self.init_level > 0.0
                    && self.init_level < 1.0
                    && self.q > 0.0
                    && self.q < 1.0 - self.init_level) =>
            {
                Err(LabelError::InvalidSpec(format!(
                    "need 0 < q < 1 - init_level, got q={} init_level={}",
                    self.q, self.init_level
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    Global,
    LocalOr,
    LocalMajority,
}

impl Combine {
    pub const ALL: [Combine; 3] = [Combine::Global, Combine::LocalOr, Combine::LocalMajority];

    pub fn name(self) -> &'static str {
        match self {
            Combine::Global => "global",
            Combine::LocalOr => "local_or",
            Combine::LocalMajority => "local_majority",
        }
    }
}

impl std::fmt::Display for Combine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalMode {
    Or,
    Majority,
}

/// `1` where `score > threshold`.
pub fn apply_threshold(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > threshold)).collect()
}

fn sorted(scores: &[f64]) -> Vec<f64> {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Empirical `(1 − f)` quantile with linear interpolation between order
/// statistics.
pub fn threshold_percentile(scores: &[f64], f: f64) -> Result<f64, LabelError> {
    if !(f > 0.0 && f < 1.0) {
        return Err(LabelError::InvalidSpec(format!("fraction f={f} must lie in (0, 1)")));
    }
    if scores.is_empty() {
        return Err(LabelError::Empty);
    }
    let s = sorted(scores);
    let pos = (1.0 - f) * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    let frac = pos - lo as f64;
    Ok(s[lo] + frac * (s[hi] - s[lo]))
}

/// Sweeps midpoints between consecutive distinct scores and returns the one
/// maximising `metric` on the validation labels. Among equal metric values
/// the largest threshold wins.
pub fn threshold_validation_best(scores: &[f64], labels: &[u8], metric: Metric) -> Result<f64, LabelError> {
    if scores.len() != labels.len() {
        return Err(LabelError::LengthMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(LabelError::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    // Walk from the highest score down; after consuming a block of ties the
    // candidate threshold sits halfway to the next lower distinct score.
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut best: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < idx.len() {
        let v = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == v {
            if labels[idx[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        if i == idx.len() {
            break;
        }
        let th = 0.5 * (v + scores[idx[i]]);
        let c = Confusion::new(tp, neg - fp, fp, pos - tp);
        let m = metric.eval(&c);
        if best.is_none_or(|(_, bm)| m > bm) {
            best = Some((th, m));
        }
    }
    // A single distinct score leaves no midpoint: label nothing.
    Ok(best.map_or(scores[idx[0]], |(th, _)| th))
}

/// Per-timestamp mean over variates.
pub fn combine_global(scores: &ScoreSeries) -> Vec<f64> {
    let n = scores.n_variates() as f64;
    (0..scores.len())
        .map(|t| scores.row(t).iter().sum::<f64>() / n)
        .collect()
}

/// Pools `T × N` row-major labels: any positive (`Or`) or at least
/// `ceil(N/2)` positives (`Majority`).
pub fn combine_local(labels: &[u8], n_variates: usize, mode: LocalMode) -> Vec<u8> {
    let need = match mode {
        LocalMode::Or => 1,
        LocalMode::Majority => n_variates.div_ceil(2),
    };
    labels
        .chunks(n_variates)
        .map(|row| u8::from(row.iter().map(|&l| l as usize).sum::<usize>() >= need))
        .collect()
}

/// Extra inputs some threshold methods need.
#[derive(Debug, Clone, Copy, Default)]
pub struct LabelContext<'a> {
    /// Labelled validation scores for `validation_best`.
    pub validation: Option<(&'a ScoreSeries, &'a [u8])>,
    /// Training-split scores for `fit_on = train`.
    pub train_scores: Option<&'a ScoreSeries>,
}

/// Labels plus the thresholds that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelOutcome {
    pub labels: Vec<u8>,
    pub combine: Combine,
    pub spec: ThresholdSpec,
    /// One threshold for `global`, one per variate otherwise.
    pub thresholds: Vec<f64>,
    /// Variates whose POT fit failed and fell back to the percentile rule.
    pub fallback_variates: Vec<usize>,
    pub fits: Vec<Option<GpdFit>>,
}

impl LabelOutcome {
    /// Single-column 0/1 CSV and a JSON sidecar with the thresholds.
    pub fn write(&self, path: &Path) -> Result<(), LabelError> {
        write_labels(&self.labels, path)?;
        let meta = path.with_extension("meta.json");
        let mut record = serde_json::to_value(self)?;
        if let Some(obj) = record.as_object_mut() {
            obj.remove("labels");
        }
        std::fs::write(&meta, serde_json::to_string_pretty(&record)?).map_err(|source| LabelError::Io {
            path: meta.display().to_string(),
            source,
        })
    }
}

struct Threshold {
    value: f64,
    fit: Option<GpdFit>,
    fallback: bool,
}

fn threshold_for(
    spec: &ThresholdSpec,
    scored: &[f64],
    train: Option<&[f64]>,
    validation: Option<(&[f64], &[u8])>,
    allow_fallback: bool,
) -> Result<Threshold, LabelError> {
    let fit_source = match spec.fit_on {
        FitOn::Scored => scored,
        FitOn::Train => train.ok_or(LabelError::MissingInput("fit_on = train", "training scores"))?,
    };
    match spec.method {
        ThresholdMethod::Percentile => Ok(Threshold {
            value: threshold_percentile(fit_source, spec.f)?,
            fit: None,
            fallback: false,
        }),
        ThresholdMethod::ValidationBest => {
            let (s, l) = validation.ok_or(LabelError::MissingInput(
                "validation_best",
                "labelled validation scores",
            ))?;
            Ok(Threshold {
                value: threshold_validation_best(s, l, spec.metric)?,
                fit: None,
                fallback: false,
            })
        }
        ThresholdMethod::Pot => match threshold_pot(fit_source, spec.q, spec.init_level) {
            Ok((value, fit)) => Ok(Threshold {
                value,
                fit: Some(fit),
                fallback: false,
            }),
            Err(LabelError::TooFewExcesses { .. } | LabelError::FitFailed(_)) if allow_fallback => Ok(Threshold {
                value: threshold_percentile(fit_source, spec.f)?,
                fit: None,
                fallback: true,
            }),
            Err(e) => Err(e),
        },
    }
}

/// Thresholds `scores` and combines variates into one label per stamp.
///
/// `Global` thresholds the variate mean. The local modes threshold each
/// variate independently; a variate whose POT fit fails falls back to the
/// percentile rule with `spec.f` and is listed in `fallback_variates`.
pub fn extract_labels(
    scores: &ScoreSeries,
    spec: &ThresholdSpec,
    combine: Combine,
    ctx: &LabelContext,
) -> Result<LabelOutcome, LabelError> {
    spec.validate()?;
    if scores.is_empty() {
        return Err(LabelError::Empty);
    }
    let n = scores.n_variates();
    let mut out = LabelOutcome {
        labels: Vec::new(),
        combine,
        spec: *spec,
        thresholds: Vec::new(),
        fallback_variates: Vec::new(),
        fits: Vec::new(),
    };
    if combine == Combine::Global {
        let s = combine_global(scores);
        let train = ctx.train_scores.map(combine_global);
        let val = ctx.validation.map(|(vs, vl)| (combine_global(vs), vl));
        let th = threshold_for(
            spec,
            &s,
            train.as_deref(),
            val.as_ref().map(|(a, b)| (a.as_slice(), *b)),
            false,
        )?;
        out.labels = apply_threshold(&s, th.value);
        out.thresholds.push(th.value);
        out.fits.push(th.fit);
        return Ok(out);
    }
    let mut per = vec![0u8; scores.len() * n];
    for v in 0..n {
        let col = scores.column(v);
        let train = ctx.train_scores.map(|t| t.column(v));
        let val = ctx.validation.map(|(vs, vl)| (vs.column(v), vl));
        let th = threshold_for(
            spec,
            &col,
            train.as_deref(),
            val.as_ref().map(|(a, b)| (a.as_slice(), *b)),
            true,
        )?;
        for (t, &s) in col.iter().enumerate() {
            per[t * n + v] = u8::from(s > th.value);
        }
        if th.fallback {
            out.fallback_variates.push(v);
        }
        out.thresholds.push(th.value);
        out.fits.push(th.fit);
    }
    let mode = if combine == Combine::LocalOr {
        LocalMode::Or
    } else {
        LocalMode::Majority
    };
    out.labels = combine_local(&per, n, mode);
    Ok(out)
}
