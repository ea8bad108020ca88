//! Time-series containers, CSV ingestion, normalisation, sliding windows and
//! synthetic anomaly injection.

mod csv_io;
mod normalize;
mod synth;
mod windows;

use std::path::Path;

use thiserror::Error;

pub use csv_io::{load_csv, load_labels, write_csv, write_labels};
pub use normalize::{normalize, NormMode, NormStats};
pub use synth::{contaminate, synthesize, AnomalyKind, AnomalySpec, SignalModel, SyntheticDataset, SyntheticProfile};
pub use windows::{make_windows, WindowPurpose, WindowSet};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("empty input: {0}")]
    Empty(String),
    #[error("values length {len} is not a multiple of {n_variates} variates")]
    Shape { len: usize, n_variates: usize },
    #[error("labels have {got} rows, expected {expected}")]
    LabelLength { expected: usize, got: usize },
    #[error("label at row {row} is not 0 or 1")]
    NonBinaryLabel { row: usize },
    #[error("cannot parse value {value:?} at row {row}, column {col}")]
    Parse { row: usize, col: usize, value: String },
    #[error("row {row} has {got} fields, expected {expected}")]
    Ragged { row: usize, expected: usize, got: usize },
    #[error("window size {window} exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("invalid step {step} for window {window}")]
    InvalidStep { step: usize, window: usize },
    #[error("invalid anomaly spec: {0}")]
    InvalidSpec(String),
    #[error("anomaly specs overlap at timestamp {0}")]
    OverlappingSpecs(usize),
    #[error("contamination rate {rate} is infeasible: {reason}")]
    InfeasibleRate { rate: f64, reason: String },
    #[error("normalisation stats cover {got} variates, series has {expected}")]
    StatsMismatch { expected: usize, got: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// A `T × N` matrix of observations with optional per-timestamp labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    name: String,
    variate_names: Vec<String>,
    n_variates: usize,
    values: Vec<f64>,
    labels: Option<Vec<u8>>,
    norm_stats: Option<NormStats>,
}

impl TimeSeries {
    /// Builds a series from row-major values.
    pub fn new(name: impl Into<String>, values: Vec<f64>, n_variates: usize) -> Result<Self, DataError> {
        if n_variates == 0 || values.is_empty() {
            return Err(DataError::Empty("time series needs T >= 1 and N >= 1".into()));
        }
        if !values.len().is_multiple_of(n_variates) {
            return Err(DataError::Shape {
                len: values.len(),
                n_variates,
            });
        }
        Ok(Self {
            name: name.into(),
            variate_names: (0..n_variates).map(|n| format!("v{n}")).collect(),
            n_variates,
            values,
            labels: None,
            norm_stats: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self, DataError> {
        self.set_labels(labels)?;
        Ok(self)
    }

    pub fn set_labels(&mut self, labels: Vec<u8>) -> Result<(), DataError> {
        if labels.len() != self.len() {
            return Err(DataError::LabelLength {
                expected: self.len(),
                got: labels.len(),
            });
        }
        if let Some(row) = labels.iter().position(|&l| l > 1) {
            return Err(DataError::NonBinaryLabel { row });
        }
        self.labels = Some(labels);
        Ok(())
    }

    pub fn with_variate_names(mut self, names: Vec<String>) -> Result<Self, DataError> {
        if names.len() != self.n_variates {
            return Err(DataError::Shape {
                len: names.len(),
                n_variates: self.n_variates,
            });
        }
        self.variate_names = names;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn variate_names(&self) -> &[String] {
        &self.variate_names
    }

    /// Number of timestamps `T`.
    pub fn len(&self) -> usize {
        self.values.len() / self.n_variates
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of variates `N`.
    pub fn n_variates(&self) -> usize {
        self.n_variates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_variates..(t + 1) * self.n_variates]
    }

    pub fn value(&self, t: usize, n: usize) -> f64 {
        self.values[t * self.n_variates + n]
    }

    pub fn column(&self, n: usize) -> Vec<f64> {
        self.values.iter().skip(n).step_by(self.n_variates).copied().collect()
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn norm_stats(&self) -> Option<&NormStats> {
        self.norm_stats.as_ref()
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn set_norm_stats(&mut self, stats: NormStats) {
        self.norm_stats = Some(stats);
    }

    /// Copy of timestamps `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self, DataError> {
        if start >= end || end > self.len() {
            return Err(DataError::Empty(format!(
                "slice [{start}, {end}) of series with {} rows",
                self.len()
            )));
        }
        let n = self.n_variates;
        let mut out = Self::new(self.name.clone(), self.values[start * n..end * n].to_vec(), n)?;
        out.variate_names = self.variate_names.clone();
        out.labels = self.labels.as_ref().map(|l| l[start..end].to_vec());
        out.norm_stats = self.norm_stats.clone();
        Ok(out)
    }

    /// Keeps every `k`-th timestamp; a label is kept as 1 if any dropped
    /// timestamp in its stride was anomalous.
    pub fn decimate(&self, k: usize) -> Result<Self, DataError> {
        if k == 0 {
            return Err(DataError::InvalidStep { step: 0, window: 0 });
        }
        let n = self.n_variates;
        let rows: Vec<usize> = (0..self.len()).step_by(k).collect();
        let mut values = Vec::with_capacity(rows.len() * n);
        for &t in &rows {
            values.extend_from_slice(self.row(t));
        }
        let mut out = Self::new(self.name.clone(), values, n)?;
        out.variate_names = self.variate_names.clone();
        out.labels = self.labels.as_ref().map(|l| {
            rows.iter()
                .map(|&t| l[t..(t + k).min(l.len())].iter().copied().max().unwrap_or(0))
                .collect()
        });
        Ok(out)
    }
}

/// Maximal runs of 1-labels as `(start, length)`.
pub fn anomaly_runs(labels: &[u8]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (t, &l) in labels.iter().enumerate() {
        match (l, start) {
            (1, None) => start = Some(t),
            (0, Some(s)) => {
                runs.push((s, t - s));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, labels.len() - s));
    }
    runs
}

/// Train/test pair. The test split must be labelled for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub train: TimeSeries,
    pub test: TimeSeries,
}

impl Dataset {
    pub const TRAIN_FILE: &'static str = "train.csv";
    pub const TRAIN_LABELS_FILE: &'static str = "train_labels.csv";
    pub const TEST_FILE: &'static str = "test.csv";
    pub const TEST_LABELS_FILE: &'static str = "test_labels.csv";

    pub fn new(name: impl Into<String>, train: TimeSeries, test: TimeSeries) -> Result<Self, DataError> {
        if train.n_variates() != test.n_variates() {
            return Err(DataError::Shape {
                len: test.n_variates(),
                n_variates: train.n_variates(),
            });
        }
        Ok(Self {
            name: name.into(),
            train,
            test,
        })
    }

    /// Reads `train.csv`, `test.csv`, `test_labels.csv` and the optional
    /// `train_labels.csv` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, DataError> {
        let train_labels = dir.join(Self::TRAIN_LABELS_FILE);
        let train = load_csv(
            &dir.join(Self::TRAIN_FILE),
            train_labels.exists().then_some(train_labels.as_path()),
        )?;
        let test = load_csv(&dir.join(Self::TEST_FILE), Some(&dir.join(Self::TEST_LABELS_FILE)))?;
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        Self::new(name, train, test)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), DataError> {
        std::fs::create_dir_all(dir).map_err(|source| DataError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write_csv(&self.train, &dir.join(Self::TRAIN_FILE))?;
        if let Some(l) = self.train.labels() {
            write_labels(l, &dir.join(Self::TRAIN_LABELS_FILE))?;
        }
        write_csv(&self.test, &dir.join(Self::TEST_FILE))?;
        if let Some(l) = self.test.labels() {
            write_labels(l, &dir.join(Self::TEST_LABELS_FILE))?;
        }
        Ok(())
    }

    /// Z-scores both splits with statistics fitted on the training split.
    pub fn normalized(&self, mode: NormMode) -> Result<Self, DataError> {
        let train = normalize(&self.train, mode, None)?;
        let stats = train.norm_stats().cloned();
        let test = normalize(&self.test, mode, stats.as_ref())?;
        Self::new(self.name.clone(), train, test)
    }
}
