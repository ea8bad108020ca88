use serde::{Deserialize, Serialize};

use super::{DataError, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    #[default]
    Zscore,
    Minmax,
}

/// Per-variate statistics: `(mean, std)` for z-scoring, `(min, max)` for min-max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mode: NormMode,
    pub center: Vec<f64>,
    pub spread: Vec<f64>,
}

impl NormStats {
    pub fn fit(ts: &TimeSeries, mode: NormMode) -> Self {
        let n = ts.n_variates();
        let len = ts.len() as f64;
        let mut center = vec![0.0; n];
        let mut spread = vec![0.0; n];
        for v in 0..n {
            let col = ts.column(v);
            match mode {
                NormMode::Zscore => {
                    let mean = col.iter().sum::<f64>() / len;
                    let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / len;
                    center[v] = mean;
                    spread[v] = var.sqrt();
                }
                NormMode::Minmax => {
                    center[v] = col.iter().copied().fold(f64::INFINITY, f64::min);
                    spread[v] = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                }
            }
        }
        Self { mode, center, spread }
    }

    fn scale(&self, v: usize) -> Option<(f64, f64)> {
        let (offset, width) = match self.mode {
            NormMode::Zscore => (self.center[v], self.spread[v]),
            NormMode::Minmax => (self.center[v], self.spread[v] - self.center[v]),
        };
        // Constant variates map to zero.
        let tiny = 1e-12 * offset.abs().max(1.0);
        (width > tiny).then_some((offset, width))
    }

    pub fn apply(&self, ts: &TimeSeries) -> Result<TimeSeries, DataError> {
        let n = ts.n_variates();
        if self.center.len() != n || self.spread.len() != n {
            return Err(DataError::StatsMismatch {
                expected: n,
                got: self.center.len(),
            });
        }
        let scales: Vec<Option<(f64, f64)>> = (0..n).map(|v| self.scale(v)).collect();
        let mut out = ts.clone();
        for (k, x) in out.values_mut().iter_mut().enumerate() {
            *x = match scales[k % n] {
                Some((o, w)) => (*x - o) / w,
                None => 0.0,
            };
        }
        out.set_norm_stats(self.clone());
        Ok(out)
    }
}

/// Normalises each variate. With `fit_stats`, statistics from another split
/// (usually training) are reused; otherwise they are fitted on `ts`.
pub fn normalize(ts: &TimeSeries, mode: NormMode, fit_stats: Option<&NormStats>) -> Result<TimeSeries, DataError> {
    match fit_stats {
        Some(stats) => stats.apply(ts),
        None => NormStats::fit(ts, mode).apply(ts),
    }
}
