//! Per-timestamp, per-variate anomaly scores assembled from model outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{make_windows, DataError, TimeSeries, WindowPurpose};
use crate::losses::LossKind;
use crate::models::{baseline_score, usad_score, ModelError, ModelKind, TrainedModel};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("invalid scores: {0}")]
    Invalid(String),
    #[error("series of length {len} is too short for window {window}")]
    TooShort { len: usize, window: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
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

/// `T × N` non-negative scores plus, per timestamp, the number of windows
/// that produced it (0 marks stamps no model output could cover).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    model_id: String,
    n_variates: usize,
    scores: Vec<f64>,
    coverage: Vec<u32>,
}

impl ScoreSeries {
    pub fn new(
        model_id: impl Into<String>,
        scores: Vec<f64>,
        n_variates: usize,
        coverage: Vec<u32>,
    ) -> Result<Self, ScoreError> {
        if n_variates == 0 || scores.len() != coverage.len() * n_variates {
            return Err(ScoreError::Invalid(format!(
                "{} scores for {} stamps × {n_variates} variates",
                scores.len(),
                coverage.len()
            )));
        }
        if let Some(k) = scores.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(ScoreError::Invalid(format!(
                "score {} at stamp {}, variate {}",
                scores[k],
                k / n_variates,
                k % n_variates
            )));
        }
        Ok(Self {
            model_id: model_id.into(),
            n_variates,
            scores,
            coverage,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn len(&self) -> usize {
        self.coverage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coverage.is_empty()
    }

    pub fn n_variates(&self) -> usize {
        self.n_variates
    }

    /// Row-major `T × N`.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.scores[t * self.n_variates..(t + 1) * self.n_variates]
    }

    pub fn column(&self, n: usize) -> Vec<f64> {
        self.scores.iter().skip(n).step_by(self.n_variates).copied().collect()
    }

    pub fn coverage(&self) -> &[u32] {
        &self.coverage
    }

    /// Writes `T` rows of `N` scores and a JSON sidecar next to `path`.
    pub fn write_csv(&self, path: &Path, meta: &ScoreMetadata) -> Result<PathBuf, ScoreError> {
        let io = |source| ScoreError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        let header: Vec<String> = (0..self.n_variates).map(|n| format!("v{n}")).collect();
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for t in 0..self.len() {
            let row: Vec<String> = self.row(t).iter().map(f64::to_string).collect();
            writeln!(w, "{}", row.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)?;
        let meta_path = path.with_extension("meta.json");
        std::fs::write(&meta_path, serde_json::to_string_pretty(meta)?).map_err(|source| ScoreError::Io {
            path: meta_path.display().to_string(),
            source,
        })?;
        Ok(meta_path)
    }
}

/// Provenance written beside exported scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMetadata {
    pub model_id: String,
    pub kind: ModelKind,
    pub window: usize,
    pub step: usize,
    pub d_model: usize,
    pub loss: LossKind,
    pub seed: u64,
    /// Stamps with zero coverage (forecast warm-up).
    pub uncovered: usize,
}

impl ScoreMetadata {
    pub fn new(model: &TrainedModel, scores: &ScoreSeries) -> Self {
        let c = &model.config;
        Self {
            model_id: scores.model_id().to_string(),
            kind: c.kind,
            window: c.window,
            step: c.step,
            d_model: c.d_model,
            loss: c.loss.kind,
            seed: c.seed,
            uncovered: scores.coverage().iter().filter(|&&c| c == 0).count(),
        }
    }
}

/// Squared residuals over non-overlapping windows (`S = W`). For USAD the
/// residual is the weighted absolute error of both autoencoders. The padded
/// tail of the last window is dropped.
pub fn score_reconstruction(model: &TrainedModel, ts: &TimeSeries) -> Result<ScoreSeries, ScoreError> {
    let kind = model.kind();
    if !kind.is_reconstruction() {
        return Err(ModelError::KindMismatch {
            expected: "reconstruction".into(),
            got: kind,
        }
        .into());
    }
    let x = model.prepare(ts)?;
    let (len, n, w) = (x.len(), x.n_variates(), model.config.window);
    let windows = make_windows(&x, w, w, WindowPurpose::TestReco)?;
    let idx: Vec<usize> = (0..windows.count()).collect();
    let mut flat = Vec::with_capacity(idx.len() * w * n);
    for &i in &idx {
        windows.extend_window(i, &mut flat);
    }
    let err: Vec<f64> = if kind == ModelKind::Usad {
        usad_score(model, &flat, model.config.alpha, model.config.beta)?
    } else {
        let rec = model.reconstruct_batch(&flat)?;
        flat.iter().zip(&rec).map(|(y, r)| (y - r) * (y - r)).collect()
    };
    let mut scores = err;
    scores.truncate(len * n);
    ScoreSeries::new(model.model_id(), scores, n, vec![1; len])
}

/// Squared error of one-step-ahead forecasts. The first `W` stamps have no
/// preceding window: they score 0 with coverage 0.
pub fn score_forecast(model: &TrainedModel, ts: &TimeSeries) -> Result<ScoreSeries, ScoreError> {
    if model.kind() != ModelKind::ItransformerFc {
        return Err(ModelError::KindMismatch {
            expected: "itransformer_fc".into(),
            got: model.kind(),
        }
        .into());
    }
    let x = model.prepare(ts)?;
    let (len, n, w) = (x.len(), x.n_variates(), model.config.window);
    if len <= w {
        return Err(ScoreError::TooShort { len, window: w });
    }
    let windows = make_windows(&x, w, 1, WindowPurpose::TestFc)?;
    let count = len - w;
    let mut flat = Vec::with_capacity(count * w * n);
    for i in 0..count {
        windows.extend_window(i, &mut flat);
    }
    let pred = model.forecast_batch(&flat)?;
    let mut scores = vec![0.0; len * n];
    let mut coverage = vec![0; len];
    for i in 0..count {
        let t = i + w;
        for v in 0..n {
            let d = pred[i * n + v] - x.value(t, v);
            scores[t * n + v] = d * d;
        }
        coverage[t] = 1;
    }
    ScoreSeries::new(model.model_id(), scores, n, coverage)
}

/// Dispatches on the model kind.
pub fn score(model: &TrainedModel, ts: &TimeSeries) -> Result<ScoreSeries, ScoreError> {
    match model.kind() {
        ModelKind::Baseline => Ok(baseline_score(&model.prepare(ts)?)),
        ModelKind::ItransformerFc => score_forecast(model, ts),
        _ => score_reconstruction(model, ts),
    }
}
