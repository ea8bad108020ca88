//! Fits `y = x·w + b` with the tape and Adam, then checks one gradient by
//! finite differences.

use rand::Rng;
use tsad::tensor_core::{seeded_rng, Adam, ParamStore, Tape, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = seeded_rng(7);
    let true_w = [1.5, -2.0, 0.5];
    let n = 64;
    let x: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = x
        .chunks(3)
        .map(|r| r.iter().zip(&true_w).map(|(a, b)| a * b).sum::<f64>() + 0.3)
        .collect();

    let mut store = ParamStore::new();
    let w = store.insert("w", Tensor::zeros(&[3, 1]));
    let b = store.insert("b", Tensor::zeros(&[1]));
    let mut adam = Adam::new(&store, 0.05);

    let loss_at = |store: &ParamStore, tape: &mut Tape| -> Result<_, Box<dyn std::error::Error>> {
        let xv = tape.constant(vec![n, 3], x.clone())?;
        let yv = tape.constant(vec![n, 1], y.clone())?;
        let wv = tape.param(store, w)?;
        let bv = tape.param(store, b)?;
        let p = tape.matmul(xv, wv)?;
        let p = tape.add(p, bv)?;
        let d = tape.sub(p, yv)?;
        let sq = tape.mul(d, d)?;
        Ok(tape.mean(sq)?)
    };

    for step in 0..300 {
        let mut tape = Tape::new();
        let loss = loss_at(&store, &mut tape)?;
        store.zero_grad();
        tape.backward_into(loss, &mut store)?;
        adam.step(&mut store)?;
        if step % 100 == 0 {
            println!("step {step:>3}  loss {:.6}", tape.value(loss)[0]);
        }
    }
    println!("w = {:.3?}, b = {:.3}", store.get(w).data(), store.get(b).data()[0]);

    // Central difference on w[0] against the analytic gradient.
    let mut tape = Tape::new();
    let loss = loss_at(&store, &mut tape)?;
    store.zero_grad();
    tape.backward_into(loss, &mut store)?;
    let analytic = store.get(w).grad.as_ref().map_or(0.0, |g| g[0]);
    let h = 1e-5;
    let mut eval = |delta: f64| -> Result<f64, Box<dyn std::error::Error>> {
        store.get_mut(w).data_mut()[0] += delta;
        let mut t = Tape::new();
        let l = loss_at(&store, &mut t)?;
        store.get_mut(w).data_mut()[0] -= delta;
        Ok(t.value(l)[0])
    };
    let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
    println!("dL/dw0 analytic {analytic:.3e}, numeric {numeric:.3e}");
    Ok(())
}
