use rand::seq::SliceRandom;

use super::{transformer, usad, ModelConfig, ModelError, ModelKind, TrainedModel};
use crate::dataio::{make_windows, normalize, NormMode, TimeSeries, WindowPurpose, WindowSet};
use crate::tensor_core::{seeded_rng, Adam, ParamStore, Tape, TensorError};

/// Seed offset separating the shuffle stream from weight initialisation.
pub(crate) const SHUFFLE_STREAM: u64 = 0x5f1f_f1e5;

/// Indices of windows usable as training samples. Forecasting needs a next row.
pub(crate) fn sample_indices(config: &ModelConfig, windows: &WindowSet) -> Vec<usize> {
    (0..windows.count())
        .filter(|&i| config.kind != ModelKind::ItransformerFc || windows.next_row(i).is_some())
        .collect()
}

pub(crate) fn gather(windows: &WindowSet, idx: &[usize]) -> Vec<f64> {
    let mut buf = Vec::with_capacity(idx.len() * windows.window() * windows.n_variates());
    for &i in idx {
        windows.extend_window(i, &mut buf);
    }
    buf
}

fn gather_next(windows: &WindowSet, idx: &[usize]) -> Vec<f64> {
    idx.iter()
        .flat_map(|&i| windows.next_row(i).expect("filtered").iter().copied())
        .collect()
}

/// Maps an in-graph non-finite value to the training diagnostics.
pub(crate) fn at_batch(epoch: usize, batch: usize) -> impl Fn(ModelError) -> ModelError {
    move |e| match e {
        ModelError::Tensor(TensorError::NonFinite { .. }) => ModelError::NonFiniteLoss { epoch, batch },
        other => other,
    }
}

fn check_windows(config: &ModelConfig, windows: &WindowSet) -> Result<(), ModelError> {
    config.validate()?;
    if windows.window() != config.window {
        return Err(ModelError::InvalidConfig(format!(
            "windows have W={}, config has W={}",
            windows.window(),
            config.window
        )));
    }
    Ok(())
}

/// Trains `config` on pre-built training windows with mini-batch Adam. The
/// loss curve holds the per-window average loss of each epoch.
pub fn train_model(config: &ModelConfig, windows: &WindowSet) -> Result<TrainedModel, ModelError> {
    let n = windows.n_variates();
    if config.kind == ModelKind::Baseline {
        return Ok(TrainedModel {
            config: config.clone(),
            n_variates: n,
            params: ParamStore::new(),
            train_loss_curve: Vec::new(),
            norm: None,
        });
    }
    check_windows(config, windows)?;
    if config.kind == ModelKind::Usad {
        return usad::usad_train(config, windows);
    }
    let mut order = sample_indices(config, windows);
    if order.is_empty() {
        return Err(ModelError::NoWindows);
    }
    let mut store = transformer::init_transformer(config, n);
    let mut opt = Adam::new(&store, config.lr);
    let mut rng = seeded_rng(config.seed ^ SHUFFLE_STREAM);
    let mut curve = Vec::with_capacity(config.epochs);
    let w = config.window;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, idx) in order.chunks(config.batch).enumerate() {
            let b = idx.len();
            let mut step = || -> Result<f64, ModelError> {
                let mut tape = Tape::new();
                let x = tape.constant(vec![b, w, n], gather(windows, idx))?;
                let y = transformer::transformer_forward(&mut tape, &store, config, x)?;
                let target = if config.kind == ModelKind::ItransformerFc {
                    tape.constant(vec![b, 1, n], gather_next(windows, idx))?
                } else {
                    x
                };
                let loss = config.loss.apply(&mut tape, y, target)?;
                let value = tape.value(loss)[0];
                if !value.is_finite() {
                    return Err(ModelError::NonFiniteLoss { epoch, batch: bi });
                }
                tape.backward_into(loss, &mut store)?;
                Ok(value)
            };
            let value = step().map_err(at_batch(epoch, bi))?;
            opt.step(&mut store)?;
            store.zero_grad();
            total += value * b as f64;
        }
        curve.push(total / order.len() as f64);
    }
    if !store.all_finite() {
        return Err(ModelError::NonFiniteLoss {
            epoch: config.epochs,
            batch: 0,
        });
    }
    Ok(TrainedModel {
        config: config.clone(),
        n_variates: n,
        params: store,
        train_loss_curve: curve,
        norm: None,
    })
}

/// Z-scores `train`, windows it with the configured step and trains. The
/// fitted statistics travel with the model and are reused at scoring time.
pub fn fit(config: &ModelConfig, train: &TimeSeries) -> Result<TrainedModel, ModelError> {
    let norm = normalize(train, NormMode::Zscore, None)?;
    let (w, s) = match config.kind {
        ModelKind::Baseline => (1, 1),
        _ => (config.window, config.step),
    };
    let windows = make_windows(&norm, w, s, WindowPurpose::Train)?;
    let mut model = train_model(config, &windows)?;
    model.norm = norm.norm_stats().cloned();
    Ok(model)
}
