use super::{ModelConfig, ModelError, ModelKind, TrainedModel};
use crate::tensor_core::{init_weights, seeded_rng, InitScheme, ParamStore, SeededRng, Tape, TensorError, Var};

const FFN_MULT: usize = 4;
/// Windows per inference tape.
const PREDICT_CHUNK: usize = 64;

fn param(tape: &mut Tape, store: &ParamStore, name: &str) -> Result<Var, TensorError> {
    let id = store.id(name)?;
    tape.param(store, id)
}

fn linear(tape: &mut Tape, store: &ParamStore, x: Var, prefix: &str) -> Result<Var, TensorError> {
    let w = param(tape, store, &format!("{prefix}.w"))?;
    let b = param(tape, store, &format!("{prefix}.b"))?;
    let y = tape.matmul(x, w)?;
    tape.add(y, b)
}

fn add_linear(store: &mut ParamStore, rng: &mut SeededRng, prefix: &str, fan_in: usize, fan_out: usize) {
    store.insert(
        format!("{prefix}.w"),
        init_weights(rng, &[fan_in, fan_out], InitScheme::XavierUniform),
    );
    store.insert(format!("{prefix}.b"), init_weights(rng, &[fan_out], InitScheme::Zeros));
}

fn add_norm(store: &mut ParamStore, rng: &mut SeededRng, prefix: &str, m: usize) {
    store.insert(format!("{prefix}.g"), init_weights(rng, &[m], InitScheme::Ones));
    store.insert(format!("{prefix}.b"), init_weights(rng, &[m], InitScheme::Zeros));
}

/// Fresh parameters for an attention model over `n_variates` inputs.
pub fn init_transformer(config: &ModelConfig, n_variates: usize) -> ParamStore {
    let mut rng = seeded_rng(config.seed);
    let mut store = ParamStore::new();
    let (w, m) = (config.window, config.d_model);
    let embed_in = if config.kind.is_inverted() { w } else { n_variates };
    add_linear(&mut store, &mut rng, "embed", embed_in, m);
    for l in 0..config.n_layers {
        for proj in ["q", "k", "v", "o"] {
            add_linear(&mut store, &mut rng, &format!("block{l}.attn.{proj}"), m, m);
        }
        add_norm(&mut store, &mut rng, &format!("block{l}.ln1"), m);
        add_linear(&mut store, &mut rng, &format!("block{l}.ff1"), m, FFN_MULT * m);
        add_linear(&mut store, &mut rng, &format!("block{l}.ff2"), FFN_MULT * m, m);
        add_norm(&mut store, &mut rng, &format!("block{l}.ln2"), m);
    }
    let head_out = match config.kind {
        ModelKind::ItransformerReco => w,
        ModelKind::ItransformerFc => 1,
        _ => n_variates,
    };
    add_linear(&mut store, &mut rng, "head", m, head_out);
    store
}

/// Sinusoidal position table, `len × d` row-major.
pub fn positional_encoding(len: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; len * d];
    for t in 0..len {
        for i in 0..d {
            let freq = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = t as f64 / freq;
            pe[t * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

/// `[B, W, N]` windows → `[B, N, M]` variate tokens.
pub fn embed_inverted(tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, TensorError> {
    let xt = tape.transpose(x)?;
    linear(tape, store, xt, "embed")
}

/// `[B, W, N]` windows → `[B, W, M]` time tokens with positional encoding.
pub fn embed_standard(tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, TensorError> {
    let h = linear(tape, store, x, "embed")?;
    let shape = tape.shape(h).to_vec();
    let (w, m) = (shape[1], shape[2]);
    let pe = tape.constant(vec![w, m], positional_encoding(w, m))?;
    tape.add(h, pe)
}

fn add_and_norm(tape: &mut Tape, store: &ParamStore, x: Var, y: Var, prefix: &str) -> Result<Var, TensorError> {
    let s = tape.add(x, y)?;
    let n = tape.layer_norm(s)?;
    let g = param(tape, store, &format!("{prefix}.g"))?;
    let b = param(tape, store, &format!("{prefix}.b"))?;
    let n = tape.mul(n, g)?;
    tape.add(n, b)
}

fn attention(tape: &mut Tape, store: &ParamStore, config: &ModelConfig, h: Var, l: usize) -> Result<Var, TensorError> {
    let q = linear(tape, store, h, &format!("block{l}.attn.q"))?;
    let k = linear(tape, store, h, &format!("block{l}.attn.k"))?;
    let v = linear(tape, store, h, &format!("block{l}.attn.v"))?;
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(config.n_heads);
    for hd in 0..config.n_heads {
        let (qh, kh, vh) = if config.n_heads == 1 {
            (q, k, v)
        } else {
            (
                tape.slice(q, 2, hd * dh, dh)?,
                tape.slice(k, 2, hd * dh, dh)?,
                tape.slice(v, 2, hd * dh, dh)?,
            )
        };
        let kt = tape.transpose(kh)?;
        let s = tape.matmul(qh, kt)?;
        let s = tape.scale(s, scale)?;
        let a = tape.softmax(s, 2)?;
        heads.push(tape.matmul(a, vh)?);
    }
    let o = if heads.len() == 1 {
        heads[0]
    } else {
        tape.concat(&heads, 2)?
    };
    linear(tape, store, o, &format!("block{l}.attn.o"))
}

/// Post-norm encoder stack over `[B, tokens, M]`.
pub fn encoder_forward(
    tape: &mut Tape,
    store: &ParamStore,
    config: &ModelConfig,
    tokens: Var,
) -> Result<Var, TensorError> {
    let mut h = tokens;
    for l in 0..config.n_layers {
        let a = attention(tape, store, config, h, l)?;
        h = add_and_norm(tape, store, h, a, &format!("block{l}.ln1"))?;
        let f = linear(tape, store, h, &format!("block{l}.ff1"))?;
        let f = tape.gelu(f)?;
        let f = linear(tape, store, f, &format!("block{l}.ff2"))?;
        h = add_and_norm(tape, store, h, f, &format!("block{l}.ln2"))?;
    }
    Ok(h)
}

/// Full forward pass: `[B, W, N]` → `[B, W, N]` (reconstruction) or `[B, 1, N]` (forecast).
pub fn transformer_forward(
    tape: &mut Tape,
    store: &ParamStore,
    config: &ModelConfig,
    x: Var,
) -> Result<Var, TensorError> {
    let tokens = if config.kind.is_inverted() {
        embed_inverted(tape, store, x)?
    } else {
        embed_standard(tape, store, x)?
    };
    let h = encoder_forward(tape, store, config, tokens)?;
    let out = linear(tape, store, h, "head")?;
    if config.kind.is_inverted() {
        tape.transpose(out)
    } else {
        Ok(out)
    }
}

/// Batched inference without gradients.
pub(crate) fn predict(model: &TrainedModel, windows: &[f64]) -> Result<Vec<f64>, ModelError> {
    let c = &model.config;
    let per = c.window * model.n_variates;
    if per == 0 || !windows.len().is_multiple_of(per) {
        return Err(TensorError::DataLength {
            shape: vec![c.window, model.n_variates],
            len: windows.len(),
        }
        .into());
    }
    let mut out = Vec::new();
    for chunk in windows.chunks(PREDICT_CHUNK * per) {
        let b = chunk.len() / per;
        let mut tape = Tape::new();
        let x = tape.constant(vec![b, c.window, model.n_variates], chunk.to_vec())?;
        let y = transformer_forward(&mut tape, &model.params, c, x)?;
        out.extend_from_slice(tape.value(y));
    }
    Ok(out)
}
