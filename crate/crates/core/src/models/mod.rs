//! Scoring models: the deterministic baseline, transformer encoders with
//! standard or inverted embeddings, and the USAD autoencoder pair.

mod train;
mod transformer;
mod usad;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{DataError, NormStats, TimeSeries};
use crate::losses::{LossError, LossKind, LossSpec};
use crate::scoring::ScoreSeries;
use crate::tensor_core::{NamedArray, ParamStore, TensorError};

pub use train::{fit, train_model};
pub use transformer::{
    embed_inverted, embed_standard, encoder_forward, init_transformer, positional_encoding, transformer_forward,
};
pub use usad::{usad_reconstruct, usad_score, usad_train};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("operation needs a {expected} model, got {got}")]
    KindMismatch { expected: String, got: ModelKind },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("input has {got} variates, model expects {expected}")]
    VariateMismatch { expected: usize, got: usize },
    #[error("no training windows")]
    NoWindows,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Baseline,
    TransformerReco,
    ItransformerReco,
    ItransformerFc,
    Usad,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Baseline,
        ModelKind::Usad,
        ModelKind::TransformerReco,
        ModelKind::ItransformerFc,
        ModelKind::ItransformerReco,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::TransformerReco => "transformer_reco",
            ModelKind::ItransformerReco => "itransformer_reco",
            ModelKind::ItransformerFc => "itransformer_fc",
            ModelKind::Usad => "usad",
        }
    }

    pub fn is_attention(self) -> bool {
        matches!(
            self,
            ModelKind::TransformerReco | ModelKind::ItransformerReco | ModelKind::ItransformerFc
        )
    }

    /// Whether the model reconstructs whole windows (as opposed to forecasting).
    pub fn is_reconstruction(self) -> bool {
        matches!(
            self,
            ModelKind::TransformerReco | ModelKind::ItransformerReco | ModelKind::Usad
        )
    }

    pub fn is_inverted(self) -> bool {
        matches!(self, ModelKind::ItransformerReco | ModelKind::ItransformerFc)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ModelError::InvalidConfig(format!("unknown model kind {s:?}")))
    }
}

/// Hyper-parameters of one model. `window`, `step` and `d_model` are the
/// searched `W`, `S` and `M`; the remaining fields are fixed across a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub window: usize,
    pub step: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub loss: LossSpec,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// USAD bottleneck width.
    pub latent: usize,
    /// USAD score weights: `alpha·|y − AE1(y)| + beta·|y − AE2(AE1(y))|`.
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::ItransformerReco,
            window: 96,
            step: 10,
            d_model: 96,
            n_heads: 2,
            n_layers: 2,
            loss: LossSpec::default(),
            epochs: 10,
            batch: 32,
            lr: 1e-4,
            seed: 0,
            latent: 5,
            alpha: 0.5,
            beta: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn new(kind: ModelKind, window: usize, step: usize, d_model: usize) -> Self {
        Self {
            kind,
            window,
            step,
            d_model,
            ..Self::default()
        }
    }

    /// Fixed USAD setup: `W = 10`, `S = 5`, latent width 5.
    pub fn usad() -> Self {
        Self {
            kind: ModelKind::Usad,
            window: 10,
            step: 5,
            d_model: 5,
            ..Self::default()
        }
    }

    pub fn baseline() -> Self {
        Self {
            kind: ModelKind::Baseline,
            window: 1,
            step: 1,
            d_model: 1,
            epochs: 0,
            ..Self::default()
        }
    }

    /// `kind-W-S-M-loss-seed`, or `baseline`.
    pub fn label(&self) -> String {
        match self.kind {
            ModelKind::Baseline => "baseline".into(),
            _ => format!(
                "{}-W{}-S{}-M{}-{}-seed{}",
                self.kind, self.window, self.step, self.d_model, self.loss.kind, self.seed
            ),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_loss(mut self, loss: LossSpec) -> Self {
        self.loss = loss;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads.max(1)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.kind == ModelKind::Baseline {
            return Ok(());
        }
        if self.window == 0 {
            return bad("window must be >= 1".into());
        }
        if self.step == 0 || self.step > self.window {
            return bad(format!("step {} must lie in [1, {}]", self.step, self.window));
        }
        if self.d_model == 0 {
            return bad("d_model must be >= 1".into());
        }
        if self.batch == 0 {
            return bad("batch must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        self.loss.validate()?;
        if self.kind.is_attention() {
            if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
                return bad(format!("n_heads {} must divide d_model {}", self.n_heads, self.d_model));
            }
            if self.n_layers == 0 {
                return bad("n_layers must be >= 1".into());
            }
        }
        if self.kind == ModelKind::ItransformerFc {
            if self.step != 1 {
                return bad(format!("forecasting needs step 1, got {}", self.step));
            }
            if self.loss.kind == LossKind::Softdtw {
                return bad("soft-dtw has no alignment to exploit on a single-step target".into());
            }
        }
        if self.kind == ModelKind::Usad {
            if self.latent == 0 {
                return bad("latent must be >= 1".into());
            }
            if self.alpha < 0.0 || self.beta < 0.0 || (self.alpha + self.beta - 1.0).abs() > 1e-12 {
                return bad(format!(
                    "alpha {} and beta {} must be non-negative and sum to 1",
                    self.alpha, self.beta
                ));
            }
        }
        Ok(())
    }
}

/// Parameters and training history of a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub n_variates: usize,
    pub params: ParamStore,
    pub train_loss_curve: Vec<f64>,
    /// Normalisation fitted on the training split, re-applied before scoring.
    pub norm: Option<NormStats>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    config: ModelConfig,
    n_variates: usize,
    train_loss_curve: Vec<f64>,
    norm: Option<NormStats>,
    parameters: Vec<NamedArray>,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    /// Identifier used in score and report provenance.
    pub fn model_id(&self) -> String {
        self.config.label()
    }

    pub(crate) fn check_variates(&self, n: usize) -> Result<(), ModelError> {
        if n != self.n_variates {
            return Err(ModelError::VariateMismatch {
                expected: self.n_variates,
                got: n,
            });
        }
        Ok(())
    }

    /// Applies the stored training normalisation, if any.
    pub fn prepare(&self, ts: &TimeSeries) -> Result<TimeSeries, ModelError> {
        self.check_variates(ts.n_variates())?;
        Ok(match &self.norm {
            Some(stats) => stats.apply(ts)?,
            None => ts.clone(),
        })
    }

    /// Reconstructs a batch of `W × N` windows laid out back to back.
    pub fn reconstruct_batch(&self, windows: &[f64]) -> Result<Vec<f64>, ModelError> {
        match self.kind() {
            ModelKind::TransformerReco | ModelKind::ItransformerReco => transformer::predict(self, windows),
            ModelKind::Usad => Ok(usad::usad_reconstruct(self, windows)?.0),
            other => Err(ModelError::KindMismatch {
                expected: "reconstruction".into(),
                got: other,
            }),
        }
    }

    pub fn reconstruct(&self, window: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.reconstruct_batch(window)
    }

    /// Predicts the row following each `W × N` window; output is `B × N`.
    pub fn forecast_batch(&self, windows: &[f64]) -> Result<Vec<f64>, ModelError> {
        if self.kind() != ModelKind::ItransformerFc {
            return Err(ModelError::KindMismatch {
                expected: "itransformer_fc".into(),
                got: self.kind(),
            });
        }
        transformer::predict(self, windows)
    }

    pub fn forecast(&self, window: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.forecast_batch(window)
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        let ck = Checkpoint {
            config: self.config.clone(),
            n_variates: self.n_variates,
            train_loss_curve: self.train_loss_curve.clone(),
            norm: self.norm.clone(),
            parameters: self.params.to_named_arrays(),
        };
        Ok(serde_json::to_string(&ck)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        ck.config.validate()?;
        Ok(Self {
            config: ck.config,
            n_variates: ck.n_variates,
            params: ParamStore::from_named_arrays(ck.parameters)?,
            train_loss_curve: ck.train_loss_curve,
            norm: ck.norm,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()?).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let s = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&s)
    }
}

/// Absolute values of the raw series as scores. No training, no windows.
pub fn baseline_score(ts: &TimeSeries) -> ScoreSeries {
    let scores = ts.values().iter().map(|x| x.abs()).collect();
    ScoreSeries::new("baseline", scores, ts.n_variates(), vec![1; ts.len()])
        .expect("absolute values of a finite series are valid scores")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_is_absolute_value() {
        let ts = TimeSeries::new("x", vec![-2.0, 3.0], 2).unwrap();
        assert_eq!(baseline_score(&ts).scores(), &[2.0, 3.0]);
        let z = TimeSeries::new("z", vec![0.0; 8], 2).unwrap();
        assert!(baseline_score(&z).scores().iter().all(|&s| s == 0.0));
        assert_eq!(baseline_score(&ts), baseline_score(&ts));
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig::usad().validate().is_ok());
        let mut c = ModelConfig::new(ModelKind::ItransformerFc, 10, 2, 2);
        assert!(c.validate().is_err());
        c.step = 1;
        assert!(c.validate().is_ok());
        c.loss = LossSpec::new(LossKind::Softdtw);
        assert!(c.validate().is_err());
        let mut c = ModelConfig::new(ModelKind::TransformerReco, 10, 5, 19);
        assert!(c.validate().is_err());
        c.n_heads = 1;
        assert!(c.validate().is_ok());
        let mut u = ModelConfig::usad();
        u.alpha = 0.7;
        assert!(u.validate().is_err());
        u.beta = 0.3;
        assert!(u.validate().is_ok());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
    }
}
