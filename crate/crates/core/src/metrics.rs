//! Confusion counts and the metrics derived from them.
//!
//! MCC is the headline metric. Accuracy and ROC-AUC are provided for
//! completeness but overstate performance on heavily imbalanced labels.
//! Labels are compared per timestamp; no point-adjust or range credit is
//! applied.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::ModelConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("prediction has {pred} labels, truth has {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("non-binary label at {0}")]
    NonBinary(usize),
    #[error("ROC-AUC needs both classes in the truth labels")]
    SingleClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn confusion(pred: &[u8], truth: &[u8]) -> Result<Confusion, MetricError> {
    if pred.len() != truth.len() {
        return Err(MetricError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let mut c = Confusion::default();
    for (i, (&p, &t)) in pred.iter().zip(truth).enumerate() {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => return Err(MetricError::NonBinary(i)),
        }
    }
    Ok(c)
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
pub fn mcc(c: &Confusion) -> f64 {
    let (tp, tn, fp, fn_) = (c.tp as u128, c.tn as u128, c.fp as u128, c.fn_ as u128);
    let prod = (tp + fp)
        .checked_mul(tp + fn_)
        .and_then(|x| x.checked_mul(tn + fp))
        .and_then(|x| x.checked_mul(tn + fn_));
    let num = (tp * tn) as f64 - (fp * fn_) as f64;
    let den = match prod {
        Some(0) => return 0.0,
        // Exact root for perfect squares keeps ±1 exact.
        Some(p) if p.isqrt() * p.isqrt() == p => p.isqrt() as f64,
        Some(p) => (p as f64).sqrt(),
        None => {
            let f = |a: u128, b: u128| ((a as f64) * (b as f64)).sqrt();
            f(tp + fp, tp + fn_) * f(tn + fp, tn + fn_)
        }
    };
    (num / den).clamp(-1.0, 1.0)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `(precision, recall, f1)`, each 0 when its denominator is 0.
pub fn precision_recall_f1(c: &Confusion) -> (f64, f64, f64) {
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
    (p, r, f1)
}

pub fn accuracy(c: &Confusion) -> f64 {
    ratio(c.tp + c.tn, c.total())
}

/// Area under the ROC curve from the rank statistic, with mid-ranks for ties.
pub fn roc_auc(scores: &[f64], truth: &[u8]) -> Result<f64, MetricError> {
    if scores.len() != truth.len() {
        return Err(MetricError::LengthMismatch {
            pred: scores.len(),
            truth: truth.len(),
        });
    }
    if let Some(i) = truth.iter().position(|&t| t > 1) {
        return Err(MetricError::NonBinary(i));
    }
    let pos = truth.iter().filter(|&&t| t == 1).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| truth[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Metric optimised when choosing thresholds on labelled data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Mcc,
    F1,
}

impl Metric {
    pub fn eval(self, c: &Confusion) -> f64 {
        match self {
            Metric::Mcc => mcc(c),
            Metric::F1 => precision_recall_f1(c).2,
        }
    }
}

/// One evaluated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub model: String,
    pub config: ModelConfig,
    pub label_method: String,
    pub threshold_method: String,
    pub seed: u64,
    pub confusion: Confusion,
    pub mcc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

impl EvalReport {
    pub fn new(
        dataset: impl Into<String>,
        config: &ModelConfig,
        label_method: impl Into<String>,
        threshold_method: impl Into<String>,
        confusion: Confusion,
    ) -> Self {
        let (precision, recall, f1) = precision_recall_f1(&confusion);
        Self {
            dataset: dataset.into(),
            model: config.kind.to_string(),
            config: config.clone(),
            label_method: label_method.into(),
            threshold_method: threshold_method.into(),
            seed: config.seed,
            confusion,
            mcc: mcc(&confusion),
            f1,
            precision,
            recall,
        }
    }
}
