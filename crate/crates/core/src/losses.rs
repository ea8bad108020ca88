//! Training objectives and the element-wise scoring error.
//!
//! Each loss has a plain-slice form (used for scoring, oracles and reports)
//! and a tape form used during training. Soft-DTW aligns two sequences of
//! vectors with a smoothed minimum and is only meaningful as a training loss.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor_core::{CustomOp, Tape, TensorError, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: {0} vs {1} elements")]
    ShapeMismatch(usize, usize),
    #[error("empty sequence")]
    EmptySequence,
    #[error("invalid loss parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Huber,
    Softdtw,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Huber => "huber",
            LossKind::Softdtw => "softdtw",
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Loss selection with its hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Huber transition point.
    pub delta: f64,
    /// Soft-DTW smoothing temperature.
    pub gamma: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            kind: LossKind::Mse,
            delta: 1.0,
            gamma: 1.0,
        }
    }
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.delta > 0.0) {
            return Err(LossError::InvalidParameter(format!(
                "huber delta must be > 0, got {}",
                self.delta
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(LossError::InvalidParameter(format!(
                "soft-dtw gamma must be > 0, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Batch loss between `pred` and `target`, both `[B, L, D]`.
    pub fn apply(&self, tape: &mut Tape, pred: Var, target: Var) -> Result<Var, LossError> {
        match self.kind {
            LossKind::Mse => mse_loss(tape, pred, target),
            LossKind::Huber => huber_loss(tape, pred, target, self.delta),
            LossKind::Softdtw => softdtw_loss(tape, pred, target, self.gamma),
        }
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<(), LossError> {
    if a.len() != b.len() {
        return Err(LossError::ShapeMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// Mean of squared residuals.
pub fn mse(y_hat: &[f64], y: &[f64]) -> Result<f64, LossError> {
    check_len(y_hat, y)?;
    if y.is_empty() {
        return Ok(0.0);
    }
    Ok(y_hat.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// Squared residual per cell; this is the test-time anomaly score.
pub fn mse_elementwise(y_hat: &[f64], y: &[f64]) -> Result<Vec<f64>, LossError> {
    check_len(y_hat, y)?;
    Ok(y_hat.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).collect())
}

/// Huber penalty of a single residual.
pub fn huber_point(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a < delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

fn huber_slope(r: f64, delta: f64) -> f64 {
    if r.abs() < delta {
        r
    } else {
        delta * r.signum()
    }
}

/// Mean Huber penalty over all elements.
pub fn huber(y_hat: &[f64], y: &[f64], delta: f64) -> Result<f64, LossError> {
    check_len(y_hat, y)?;
    if !(delta > 0.0) {
        return Err(LossError::InvalidParameter(format!("delta {delta}")));
    }
    if y.is_empty() {
        return Ok(0.0);
    }
    Ok(y_hat.iter().zip(y).map(|(a, b)| huber_point(b - a, delta)).sum::<f64>() / y.len() as f64)
}

fn softmin3(a: f64, b: f64, c: f64, gamma: f64) -> f64 {
    let m = a.min(b).min(c);
    if gamma == 0.0 || m == f64::INFINITY {
        return m;
    }
    let s = (-(a - m) / gamma).exp() + (-(b - m) / gamma).exp() + (-(c - m) / gamma).exp();
    m - gamma * s.ln()
}

/// Pairwise squared-Euclidean costs between rows of `x` (`n×dim`) and `y` (`m×dim`).
fn cost_matrix(x: &[f64], y: &[f64], dim: usize) -> Vec<f64> {
    let n = x.len() / dim;
    let m = y.len() / dim;
    let mut d = vec![0.0; n * m];
    for i in 0..n {
        let xi = &x[i * dim..(i + 1) * dim];
        for j in 0..m {
            let yj = &y[j * dim..(j + 1) * dim];
            d[i * m + j] = xi.iter().zip(yj).map(|(p, q)| (p - q) * (p - q)).sum();
        }
    }
    d
}

/// Accumulated-cost table of size `(n+2)×(m+2)`; `R[n][m]` is the result.
fn forward_table(d: &[f64], n: usize, m: usize, gamma: f64) -> Vec<f64> {
    let w = m + 2;
    let mut r = vec![f64::INFINITY; (n + 2) * w];
    r[0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            r[i * w + j] = d[(i - 1) * m + (j - 1)]
                + softmin3(r[(i - 1) * w + (j - 1)], r[(i - 1) * w + j], r[i * w + (j - 1)], gamma);
        }
    }
    r
}

/// Expected alignment matrix `∂R[n][m] / ∂D[i][j]`, `n×m`.
fn alignment_weights(d: &[f64], r: &[f64], n: usize, m: usize, gamma: f64) -> Vec<f64> {
    let w = m + 2;
    let mut r = r.to_vec();
    let mut dx = vec![0.0; (n + 2) * w];
    for i in 1..=n {
        for j in 1..=m {
            dx[i * w + j] = d[(i - 1) * m + (j - 1)];
        }
    }
    for i in 1..=n {
        r[i * w + m + 1] = f64::NEG_INFINITY;
    }
    for j in 1..=m {
        r[(n + 1) * w + j] = f64::NEG_INFINITY;
    }
    r[(n + 1) * w + m + 1] = r[n * w + m];
    let mut e = vec![0.0; (n + 2) * w];
    e[(n + 1) * w + m + 1] = 1.0;
    for j in (1..=m).rev() {
        for i in (1..=n).rev() {
            let rij = r[i * w + j];
            let a = ((r[(i + 1) * w + j] - rij - dx[(i + 1) * w + j]) / gamma).exp();
            let b = ((r[i * w + j + 1] - rij - dx[i * w + j + 1]) / gamma).exp();
            let c = ((r[(i + 1) * w + j + 1] - rij - dx[(i + 1) * w + j + 1]) / gamma).exp();
            e[i * w + j] = e[(i + 1) * w + j] * a + e[i * w + j + 1] * b + e[(i + 1) * w + j + 1] * c;
        }
    }
    let mut out = vec![0.0; n * m];
    for i in 1..=n {
        for j in 1..=m {
            out[(i - 1) * m + (j - 1)] = e[i * w + j];
        }
    }
    out
}

fn check_sequences(x: &[f64], y: &[f64], dim: usize) -> Result<(usize, usize), LossError> {
    if dim == 0 || x.is_empty() || y.is_empty() {
        return Err(LossError::EmptySequence);
    }
    if !x.len().is_multiple_of(dim) {
        return Err(LossError::ShapeMismatch(x.len(), dim));
    }
    if !y.len().is_multiple_of(dim) {
        return Err(LossError::ShapeMismatch(y.len(), dim));
    }
    Ok((x.len() / dim, y.len() / dim))
}

/// Soft-DTW discrepancy between sequences of `dim`-vectors stored row-major.
///
/// `gamma = 0` gives the hard DTW value.
pub fn softdtw(x: &[f64], y: &[f64], dim: usize, gamma: f64) -> Result<f64, LossError> {
    let (n, m) = check_sequences(x, y, dim)?;
    if gamma < 0.0 || !gamma.is_finite() {
        return Err(LossError::InvalidParameter(format!("gamma {gamma}")));
    }
    let d = cost_matrix(x, y, dim);
    let r = forward_table(&d, n, m, gamma);
    Ok(r[n * (m + 2) + m])
}

/// Soft-DTW value with gradients with respect to `x` and `y`.
pub fn softdtw_with_grad(x: &[f64], y: &[f64], dim: usize, gamma: f64) -> Result<(f64, Vec<f64>, Vec<f64>), LossError> {
    let (n, m) = check_sequences(x, y, dim)?;
    if !(gamma > 0.0) {
        return Err(LossError::InvalidParameter(format!("gamma {gamma}")));
    }
    let d = cost_matrix(x, y, dim);
    let r = forward_table(&d, n, m, gamma);
    let e = alignment_weights(&d, &r, n, m, gamma);
    let mut gx = vec![0.0; x.len()];
    let mut gy = vec![0.0; y.len()];
    for i in 0..n {
        for j in 0..m {
            let wgt = e[i * m + j];
            if wgt == 0.0 {
                continue;
            }
            for k in 0..dim {
                let diff = x[i * dim + k] - y[j * dim + k];
                gx[i * dim + k] += 2.0 * wgt * diff;
                gy[j * dim + k] -= 2.0 * wgt * diff;
            }
        }
    }
    Ok((r[n * (m + 2) + m], gx, gy))
}

fn batch_dims(tape: &Tape, pred: Var, target: Var) -> Result<(usize, usize, usize), LossError> {
    let sp = tape.shape(pred);
    let st = tape.shape(target);
    if sp != st {
        return Err(TensorError::ShapeMismatch {
            op: "loss",
            lhs: sp.to_vec(),
            rhs: st.to_vec(),
        }
        .into());
    }
    match *sp {
        [b, l, d] => Ok((b, l, d)),
        [l, d] => Ok((1, l, d)),
        _ => Err(LossError::InvalidParameter(format!(
            "expected [B, L, D] tensors, got {sp:?}"
        ))),
    }
}

/// Mean squared error on the tape.
pub fn mse_loss(tape: &mut Tape, pred: Var, target: Var) -> Result<Var, LossError> {
    if tape.shape(pred) != tape.shape(target) {
        batch_dims(tape, pred, target)?;
    }
    let diff = tape.sub(pred, target)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean(sq)?)
}

struct HuberOp {
    delta: f64,
}

impl CustomOp for HuberOp {
    fn name(&self) -> &'static str {
        "huber"
    }

    fn backward(&self, inputs: &[&[f64]], _: &[f64], grad_out: &[f64], grads: &mut [Vec<f64>]) {
        let (pred, target) = (inputs[0], inputs[1]);
        let scale = grad_out[0] / pred.len() as f64;
        for (k, (p, t)) in pred.iter().zip(target).enumerate() {
            let s = huber_slope(p - t, self.delta) * scale;
            grads[0][k] += s;
            grads[1][k] -= s;
        }
    }
}

/// Mean Huber loss on the tape.
pub fn huber_loss(tape: &mut Tape, pred: Var, target: Var, delta: f64) -> Result<Var, LossError> {
    if tape.shape(pred) != tape.shape(target) {
        batch_dims(tape, pred, target)?;
    }
    let value = huber(tape.value(pred), tape.value(target), delta)?;
    Ok(tape.custom(&[pred, target], vec![1], vec![value], Box::new(HuberOp { delta }))?)
}

struct SoftDtwOp {
    batch: usize,
    len: usize,
    dim: usize,
    /// Per-window alignment weights from the forward pass.
    weights: Vec<Vec<f64>>,
}

impl CustomOp for SoftDtwOp {
    fn name(&self) -> &'static str {
        "softdtw"
    }

    fn backward(&self, inputs: &[&[f64]], _: &[f64], grad_out: &[f64], grads: &mut [Vec<f64>]) {
        let (pred, target) = (inputs[0], inputs[1]);
        let (l, dim) = (self.len, self.dim);
        let scale = grad_out[0] / (self.batch * l) as f64;
        for (b, e) in self.weights.iter().enumerate() {
            let off = b * l * dim;
            for i in 0..l {
                for j in 0..l {
                    let wgt = e[i * l + j];
                    if wgt == 0.0 {
                        continue;
                    }
                    for k in 0..dim {
                        let diff = pred[off + i * dim + k] - target[off + j * dim + k];
                        let g = 2.0 * wgt * diff * scale;
                        grads[0][off + i * dim + k] += g;
                        grads[1][off + j * dim + k] -= g;
                    }
                }
            }
        }
    }
}

/// Soft-DTW between each predicted window and its target, divided by the
/// window length and averaged over the batch.
pub fn softdtw_loss(tape: &mut Tape, pred: Var, target: Var, gamma: f64) -> Result<Var, LossError> {
    let (batch, len, dim) = batch_dims(tape, pred, target)?;
    if !(gamma > 0.0) {
        return Err(LossError::InvalidParameter(format!("gamma {gamma}")));
    }
    let pv = tape.value(pred);
    let tv = tape.value(target);
    let mut total = 0.0;
    let mut weights = Vec::with_capacity(batch);
    for b in 0..batch {
        let x = &pv[b * len * dim..(b + 1) * len * dim];
        let y = &tv[b * len * dim..(b + 1) * len * dim];
        let d = cost_matrix(x, y, dim);
        let r = forward_table(&d, len, len, gamma);
        total += r[len * (len + 2) + len];
        weights.push(alignment_weights(&d, &r, len, len, gamma));
    }
    let value = total / (batch * len) as f64;
    Ok(tape.custom(
        &[pred, target],
        vec![1],
        vec![value],
        Box::new(SoftDtwOp {
            batch,
            len,
            dim,
            weights,
        }),
    )?)
}
