//! Analytic gradients against central finite differences (h = 1e-5).
//!
//! Every case projects the output onto a fixed random tensor so the scalar
//! under test depends on every output element. The comparison is norm-wise:
//! `‖g − ĝ‖ / max(‖g‖, ‖ĝ‖, 1e-5) < 1e-4`, per input tensor and per
//! parameter. The floor sits above the difference quotient's rounding noise
//! (about ε·|f|/h ≈ 1e-10) and only matters for gradients that vanish
//! identically, such as the attention key bias (softmax ignores a per-row
//! shift).

use rand::Rng;
use tsad::losses::{huber_loss, mse_loss, softdtw_loss};
use tsad::models::{embed_inverted, embed_standard, encoder_forward, init_transformer, transformer_forward};
use tsad::models::{ModelConfig, ModelKind};
use tsad::tensor_core::{seeded_rng, ParamStore, SeededRng, Tape, Tensor, TensorError, Var};

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

/// Layer and loss families covered by [`run_case`].
pub const CASES: [&str; 10] = [
    "linear",
    "elementwise",
    "softmax",
    "layer_norm",
    "embedding",
    "attention",
    "model",
    "mse",
    "huber",
    "softdtw",
];

fn random(rng: &mut SeededRng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

type Build<'a> = dyn Fn(&mut Tape, &ParamStore, &[Var]) -> Result<Var, TensorError> + 'a;

/// Scalar `Σ out ⊙ R` for a fixed projection `R`.
fn project(tape: &mut Tape, out: Var, proj: &[f64]) -> Var {
    if tape.shape(out).iter().product::<usize>() == 1 {
        return out;
    }
    let r = tape.constant(tape.shape(out).to_vec(), proj.to_vec()).unwrap();
    let p = tape.mul(out, r).unwrap();
    tape.sum(p).unwrap()
}

fn constants(tape: &mut Tape, inputs: &[Tensor]) -> Vec<Var> {
    inputs
        .iter()
        .map(|t| tape.constant(t.shape().to_vec(), t.data().to_vec()).unwrap())
        .collect()
}

fn eval(build: &Build, store: &ParamStore, inputs: &[Tensor], proj: &[f64]) -> f64 {
    let mut tape = Tape::new();
    let vars = constants(&mut tape, inputs);
    let out = build(&mut tape, store, &vars).unwrap();
    let l = project(&mut tape, out, proj);
    tape.value(l)[0]
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-5)
}

/// Worst relative error over every input and parameter, or a description
/// of the first tensor exceeding [`TOL`].
fn check(
    name: &str,
    build: &Build,
    mut store: ParamStore,
    inputs: Vec<Tensor>,
    rng: &mut SeededRng,
) -> Result<f64, String> {
    let out_len = {
        let mut tape = Tape::new();
        let vars = constants(&mut tape, &inputs);
        let out = build(&mut tape, &store, &vars).map_err(|e| e.to_string())?;
        tape.value(out).len()
    };
    let proj: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(&t.clone().with_grad()).unwrap())
        .collect();
    let out = build(&mut tape, &store, &vars).map_err(|e| e.to_string())?;
    let loss = project(&mut tape, out, &proj);
    store.zero_grad();
    tape.backward_into(loss, &mut store).map_err(|e| e.to_string())?;

    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let analytic = tape.grad(*v).map(<[f64]>::to_vec).unwrap_or(vec![0.0; inputs[k].len()]);
        let numeric: Vec<f64> = (0..inputs[k].len())
            .map(|i| {
                let mut plus = inputs.clone();
                plus[k].data_mut()[i] += H;
                let mut minus = inputs.clone();
                minus[k].data_mut()[i] -= H;
                (eval(build, &store, &plus, &proj) - eval(build, &store, &minus, &proj)) / (2.0 * H)
            })
            .collect();
        let e = rel_err(&analytic, &numeric);
        if !(e < TOL) {
            return Err(format!("{name}: input {k} rel err {e:e}"));
        }
        worst = worst.max(e);
    }
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let len = store.get(id).len();
        let analytic = store.get(id).grad.clone().unwrap_or(vec![0.0; len]);
        let mut numeric = Vec::with_capacity(len);
        for i in 0..len {
            let orig = store.get(id).data()[i];
            store.get_mut(id).data_mut()[i] = orig + H;
            let fp = eval(build, &store, &inputs, &proj);
            store.get_mut(id).data_mut()[i] = orig - H;
            let fm = eval(build, &store, &inputs, &proj);
            store.get_mut(id).data_mut()[i] = orig;
            numeric.push((fp - fm) / (2.0 * H));
        }
        let e = rel_err(&analytic, &numeric);
        if !(e < TOL) {
            return Err(format!("{name}: param {} rel err {e:e}", store.name(id)));
        }
        worst = worst.max(e);
    }
    Ok(worst)
}

/// Moves every parameter off its initial value (zero biases, unit gains).
fn jitter(store: &mut ParamStore, rng: &mut SeededRng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for x in store.get_mut(id).data_mut() {
            *x += rng.random_range(-0.3..0.3);
        }
    }
}

fn tiny(kind: ModelKind, w: usize, m: usize, heads: usize) -> ModelConfig {
    ModelConfig {
        n_heads: heads,
        n_layers: 1,
        ..ModelConfig::new(kind, w, 1, m)
    }
}

fn one(case: &str, i: u64, rng: &mut SeededRng) -> Result<f64, String> {
    let none = ParamStore::new;
    match case {
        "linear" => {
            let mut store = ParamStore::new();
            store.insert("w", random(rng, &[4, 3], 1.0));
            store.insert("b", random(rng, &[3], 1.0));
            let x = random(rng, &[2, 5, 4], 1.0);
            let build = |t: &mut Tape, s: &ParamStore, v: &[Var]| {
                let w = t.param(s, s.id("w")?)?;
                let b = t.param(s, s.id("b")?)?;
                let y = t.matmul(v[0], w)?;
                t.add(y, b)
            };
            check(case, &build, store, vec![x], rng)
        }
        "elementwise" => {
            let a = random(rng, &[2, 3, 4], 1.5);
            let b = random(rng, &[3, 4], 1.5);
            let build = |t: &mut Tape, _: &ParamStore, v: &[Var]| {
                let s = t.sub(v[0], v[1])?;
                let m = t.mul(s, v[1])?;
                let g = t.gelu(m)?;
                let r = t.relu(s)?;
                let c = t.concat(&[g, r], 2)?;
                let sl = t.slice(c, 2, 2, 5)?;
                let tr = t.transpose(sl)?;
                let rs = t.reshape(tr, vec![2, 15])?;
                let sc = t.scale(rs, 0.7)?;
                let sm = t.softmax(sc, 1)?;
                let mean = t.mean(sc)?;
                let sum = t.sum(sm)?;
                let p = t.mul(mean, mean)?;
                t.add(p, sum)
            };
            check(case, &build, none(), vec![a, b], rng)
        }
        "softmax" => {
            let a = random(rng, &[2, 3, 4], 2.0);
            let axis = (i % 3) as usize;
            let build = move |t: &mut Tape, _: &ParamStore, v: &[Var]| t.softmax(v[0], axis);
            check(case, &build, none(), vec![a], rng)
        }
        "layer_norm" => {
            let mut store = ParamStore::new();
            store.insert("g", random(rng, &[6], 1.5));
            store.insert("b", random(rng, &[6], 1.0));
            let x = random(rng, &[2, 3, 6], 2.0);
            let build = |t: &mut Tape, s: &ParamStore, v: &[Var]| {
                let n = t.layer_norm(v[0])?;
                let g = t.param(s, s.id("g")?)?;
                let b = t.param(s, s.id("b")?)?;
                let y = t.mul(n, g)?;
                t.add(y, b)
            };
            check(case, &build, store, vec![x], rng)
        }
        "embedding" => {
            let (w, n, m) = (3 + (i % 3) as usize, 2, 4);
            let x = random(rng, &[2, w, n], 1.0);
            let mut store = init_transformer(&tiny(ModelKind::ItransformerReco, w, m, 2), n);
            jitter(&mut store, rng);
            let build = |t: &mut Tape, s: &ParamStore, v: &[Var]| embed_inverted(t, s, v[0]);
            let a = check("embedding (inverted)", &build, store, vec![x.clone()], rng)?;
            let mut store = init_transformer(&tiny(ModelKind::TransformerReco, w, m, 2), n);
            jitter(&mut store, rng);
            let build = |t: &mut Tape, s: &ParamStore, v: &[Var]| embed_standard(t, s, v[0]);
            Ok(a.max(check("embedding (standard)", &build, store, vec![x], rng)?))
        }
        "attention" => {
            let c = tiny(ModelKind::ItransformerReco, 4, 4, 1 + (i % 2) as usize);
            let mut store = init_transformer(&c, 3);
            jitter(&mut store, rng);
            let tokens = random(rng, &[2, 3, 4], 1.0);
            let build = |t: &mut Tape, s: &ParamStore, v: &[Var]| encoder_forward(t, s, &c, v[0]);
            check(case, &build, store, vec![tokens], rng)
        }
        "model" => {
            let kinds = [
                ModelKind::ItransformerReco,
                ModelKind::TransformerReco,
                ModelKind::ItransformerFc,
            ];
            let c = tiny(kinds[(i % 3) as usize], 4, 4, 2);
            let mut store = init_transformer(&c, 2);
            jitter(&mut store, rng);
            let x = random(rng, &[2, 4, 2], 1.0);
            let build = |t: &mut Tape, s: &ParamStore, v: &[Var]| transformer_forward(t, s, &c, v[0]);
            check(c.kind.name(), &build, store, vec![x], rng)
        }
        "mse" | "huber" | "softdtw" => {
            let pred = random(rng, &[2, 4, 3], 1.5);
            let target = random(rng, &[2, 4, 3], 1.5);
            let delta = 0.3 + 0.1 * i as f64;
            let gamma = [0.1, 1.0, 2.0][(i % 3) as usize];
            let kind = case.to_string();
            let build = move |t: &mut Tape, _: &ParamStore, v: &[Var]| {
                let r = match kind.as_str() {
                    "mse" => mse_loss(t, v[0], v[1]),
                    "huber" => huber_loss(t, v[0], v[1], delta),
                    _ => softdtw_loss(t, v[0], v[1], gamma),
                };
                Ok(r.expect("loss"))
            };
            check(case, &build, none(), vec![pred, target], rng)
        }
        other => Err(format!("unknown case {other}")),
    }
}

/// Runs `instances` random instances of `case`; returns the worst error.
pub fn run_case(case: &str, instances: u64, seed: u64) -> Result<f64, String> {
    let mut rng = seeded_rng(seed);
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        worst = worst.max(one(case, i, &mut rng)?);
    }
    Ok(worst)
}
