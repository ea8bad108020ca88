use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;

/// Portable seeded generator used for every random draw in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Weight initialisation schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    XavierUniform,
    Zeros,
    Ones,
}

/// Xavier bound for a weight of the given shape. The last two axes are
/// `(fan_in, fan_out)`; a vector counts as `(1, len)`.
pub fn xavier_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape {
        [n] => (1, *n),
        [.., a, b] => (*a, *b),
        [] => (1, 1),
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn init_weights(rng: &mut SeededRng, shape: &[usize], scheme: InitScheme) -> Tensor {
    match scheme {
        InitScheme::Zeros => Tensor::zeros(shape),
        InitScheme::Ones => Tensor::filled(shape, 1.0),
        InitScheme::XavierUniform => {
            let bound = xavier_bound(shape);
            let mut t = Tensor::zeros(shape);
            for x in t.data_mut() {
                *x = rng.random_range(-bound..bound);
            }
            t
        }
    }
}
