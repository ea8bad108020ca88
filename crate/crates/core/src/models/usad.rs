//! Two autoencoders sharing one encoder, trained first to reconstruct and
//! then against each other.

use rand::seq::SliceRandom;

use super::train::{at_batch, gather, sample_indices, SHUFFLE_STREAM};
use super::{ModelConfig, ModelError, ModelKind, TrainedModel};
use crate::dataio::WindowSet;
use crate::losses::mse_loss;
use crate::tensor_core::{init_weights, seeded_rng, Adam, InitScheme, ParamId, ParamStore, Tape, TensorError, Var};

fn widths(config: &ModelConfig, n_variates: usize) -> [usize; 4] {
    let input = config.window * n_variates;
    [input, (input / 2).max(1), (input / 4).max(1), config.latent]
}

fn init(config: &ModelConfig, n_variates: usize) -> ParamStore {
    let mut rng = seeded_rng(config.seed);
    let mut store = ParamStore::new();
    let w = widths(config, n_variates);
    let mut layer = |store: &mut ParamStore, name: String, i: usize, o: usize| {
        store.insert(
            format!("{name}.w"),
            init_weights(&mut rng, &[i, o], InitScheme::XavierUniform),
        );
        store.insert(format!("{name}.b"), init_weights(&mut rng, &[o], InitScheme::Zeros));
    };
    for l in 0..3 {
        layer(&mut store, format!("enc.l{l}"), w[l], w[l + 1]);
    }
    for dec in ["dec1", "dec2"] {
        for l in 0..3 {
            layer(&mut store, format!("{dec}.l{l}"), w[3 - l], w[2 - l]);
        }
    }
    store
}

fn ids_with_prefix(store: &ParamStore, prefixes: &[&str]) -> Vec<ParamId> {
    store
        .ids()
        .filter(|&id| prefixes.iter().any(|p| store.name(id).starts_with(p)))
        .collect()
}

/// Three dense layers, ReLU between them, linear output.
fn mlp(tape: &mut Tape, store: &ParamStore, prefix: &str, x: Var) -> Result<Var, TensorError> {
    let mut h = x;
    for l in 0..3 {
        let w = tape.param(store, store.id(&format!("{prefix}.l{l}.w"))?)?;
        let b = tape.param(store, store.id(&format!("{prefix}.l{l}.b"))?)?;
        h = tape.matmul(h, w)?;
        h = tape.add(h, b)?;
        if l < 2 {
            h = tape.relu(h)?;
        }
    }
    Ok(h)
}

struct Outputs {
    w1: Var,
    w2: Var,
    w3: Var,
}

fn forward(tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Outputs, TensorError> {
    let z = mlp(tape, store, "enc", x)?;
    let w1 = mlp(tape, store, "dec1", z)?;
    let w2 = mlp(tape, store, "dec2", z)?;
    let z1 = mlp(tape, store, "enc", w1)?;
    let w3 = mlp(tape, store, "dec2", z1)?;
    Ok(Outputs { w1, w2, w3 })
}

/// Objective of autoencoder `which` (1 or 2) at 1-based `epoch`.
///
/// Up to `epochs / 2` both simply reconstruct. Afterwards, with `k = 1/epoch`,
/// AE1 minimises `k·‖w−w1‖² + (1−k)·‖w−w3‖²` and AE2 minimises
/// `k·‖w−w2‖² − (1−k)·‖w−w3‖²`.
fn objective(tape: &mut Tape, o: &Outputs, x: Var, which: u8, epoch: usize, epochs: usize) -> Result<Var, ModelError> {
    let own = if which == 1 { o.w1 } else { o.w2 };
    let rec = mse_loss(tape, own, x)?;
    if epoch <= epochs / 2 {
        return Ok(rec);
    }
    let k = 1.0 / epoch as f64;
    let adv = mse_loss(tape, o.w3, x)?;
    let rec = tape.scale(rec, k)?;
    let adv = tape.scale(adv, if which == 1 { 1.0 - k } else { k - 1.0 })?;
    Ok(tape.add(rec, adv)?)
}

/// Two-phase adversarial training. The loss curve records AE1's objective.
pub fn usad_train(config: &ModelConfig, windows: &WindowSet) -> Result<TrainedModel, ModelError> {
    config.validate()?;
    if config.kind != ModelKind::Usad {
        return Err(ModelError::KindMismatch {
            expected: "usad".into(),
            got: config.kind,
        });
    }
    let n = windows.n_variates();
    let input = config.window * n;
    let mut order = sample_indices(config, windows);
    if order.is_empty() {
        return Err(ModelError::NoWindows);
    }
    let mut store = init(config, n);
    let mut opt1 = Adam::for_params(&store, ids_with_prefix(&store, &["enc.", "dec1."]), config.lr);
    let mut opt2 = Adam::for_params(&store, ids_with_prefix(&store, &["enc.", "dec2."]), config.lr);
    let mut rng = seeded_rng(config.seed ^ SHUFFLE_STREAM);
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, idx) in order.chunks(config.batch).enumerate() {
            let b = idx.len();
            let data = gather(windows, idx);
            let mut first = 0.0;
            for (which, opt) in [(1u8, &mut opt1), (2u8, &mut opt2)] {
                let mut step = || -> Result<f64, ModelError> {
                    let mut tape = Tape::new();
                    let x = tape.constant(vec![b, input], data.clone())?;
                    let o = forward(&mut tape, &store, x)?;
                    let loss = objective(&mut tape, &o, x, which, epoch, config.epochs)?;
                    let value = tape.value(loss)[0];
                    if !value.is_finite() {
                        return Err(ModelError::NonFiniteLoss { epoch, batch: bi });
                    }
                    tape.backward_into(loss, &mut store)?;
                    opt.step(&mut store)?;
                    store.zero_grad();
                    Ok(value)
                };
                let value = step().map_err(at_batch(epoch, bi))?;
                if which == 1 {
                    first = value;
                }
            }
            total += first * b as f64;
        }
        curve.push(total / order.len() as f64);
    }
    Ok(TrainedModel {
        config: config.clone(),
        n_variates: n,
        params: store,
        train_loss_curve: curve,
        norm: None,
    })
}

/// `(AE1(y), AE2(AE1(y)))` for each `W × N` window in `windows`.
pub fn usad_reconstruct(model: &TrainedModel, windows: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let input = model.config.window * model.n_variates;
    if input == 0 || !windows.len().is_multiple_of(input) {
        return Err(TensorError::DataLength {
            shape: vec![model.config.window, model.n_variates],
            len: windows.len(),
        }
        .into());
    }
    let mut tape = Tape::new();
    let x = tape.constant(vec![windows.len() / input, input], windows.to_vec())?;
    let o = forward(&mut tape, &model.params, x)?;
    Ok((tape.value(o.w1).to_vec(), tape.value(o.w3).to_vec()))
}

/// Element-wise `alpha·|y − AE1(y)| + beta·|y − AE2(AE1(y))|`.
pub fn usad_score(model: &TrainedModel, window: &[f64], alpha: f64, beta: f64) -> Result<Vec<f64>, ModelError> {
    if alpha < 0.0 || beta < 0.0 || (alpha + beta - 1.0).abs() > 1e-12 {
        return Err(ModelError::InvalidConfig(format!(
            "alpha {alpha} and beta {beta} must be non-negative and sum to 1"
        )));
    }
    let (w1, w3) = usad_reconstruct(model, window)?;
    Ok(window
        .iter()
        .zip(w1.iter().zip(&w3))
        .map(|(y, (a, b))| alpha * (y - a).abs() + beta * (y - b).abs())
        .collect())
}
