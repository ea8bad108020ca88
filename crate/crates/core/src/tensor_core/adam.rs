use super::tensor::{ParamId, ParamStore, TensorError};

/// Bias-corrected Adam over a fixed subset of parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step_count: u64,
    ids: Vec<ParamId>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub const DEFAULT_BETA1: f64 = 0.9;
    pub const DEFAULT_BETA2: f64 = 0.999;
    pub const DEFAULT_EPS: f64 = 1e-8;

    /// Optimizer over every parameter in `store`.
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        Self::for_params(store, store.ids().collect(), lr)
    }

    /// Optimizer over `ids` only; other parameters are never touched.
    pub fn for_params(store: &ParamStore, ids: Vec<ParamId>, lr: f64) -> Self {
        let m = ids.iter().map(|&id| vec![0.0; store.get(id).len()]).collect();
        let v = ids.iter().map(|&id| vec![0.0; store.get(id).len()]).collect();
        Self {
            lr,
            beta1: Self::DEFAULT_BETA1,
            beta2: Self::DEFAULT_BETA2,
            eps: Self::DEFAULT_EPS,
            step_count: 0,
            ids,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update from the gradients currently stored on the
    /// parameters. Gradients are left in place.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), TensorError> {
        for &id in &self.ids {
            if store.get(id).grad.is_none() {
                return Err(TensorError::MissingGrad(store.name(id).to_string()));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (k, &id) in self.ids.iter().enumerate() {
            let p = store.get_mut(id);
            let g = p.grad.take().expect("checked above");
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (((x, gi), mi), vi) in p.data_mut().iter_mut().zip(&g).zip(m).zip(v) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *x -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            p.grad = Some(g);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_core::Tensor;

    fn store(vals: &[f64], grad: Option<&[f64]>) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.insert("w", Tensor::new(vec![vals.len()], vals.to_vec()).unwrap());
        s.get_mut(id).grad = grad.map(|g| g.to_vec());
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = store(&[0.5, -0.2, 3.0], Some(&[0.3, -2.0, 1e-3]));
        let before = s.get(ParamId(0)).data().to_vec();
        let mut adam = Adam::new(&s, 1e-4);
        adam.step(&mut s).unwrap();
        for ((a, b), g) in s.get(ParamId(0)).data().iter().zip(&before).zip([0.3, -2.0, 1e-3]) {
            let delta = a - b;
            assert!((delta.abs() - 1e-4).abs() < 1e-6, "delta {delta}");
            assert!(delta * g < 0.0);
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = store(&[0.5, -0.2], Some(&[0.0, 0.0]));
        let mut adam = Adam::new(&s, 1e-3);
        adam.step(&mut s).unwrap();
        assert_eq!(s.get(ParamId(0)).data(), &[0.5, -0.2]);
    }

    #[test]
    fn two_steps_monotone_against_gradient() {
        let mut s = store(&[1.0], Some(&[0.5]));
        let mut adam = Adam::new(&s, 1e-2);
        adam.step(&mut s).unwrap();
        let p1 = s.get(ParamId(0)).data()[0];
        adam.step(&mut s).unwrap();
        let p2 = s.get(ParamId(0)).data()[0];
        assert_eq!(adam.step_count(), 2);
        assert!(p1 < 1.0 && p2 < p1);
        // Constant gradient: m̂ = g and v̂ = g² at every step, so each step is lr·g/(|g|+eps).
        let expected = 1.0 - 2.0 * 1e-2 * 0.5 / (0.5 + 1e-8);
        assert!((p2 - expected).abs() < 1e-12);
    }

    #[test]
    fn missing_grad_names_parameter() {
        let mut s = store(&[1.0], None);
        let mut adam = Adam::new(&s, 1e-3);
        assert_eq!(adam.step(&mut s), Err(TensorError::MissingGrad("w".to_string())));
        assert_eq!(adam.step_count(), 0);
    }
}
