//! Dense `f64` tensors, reverse-mode autodiff and the Adam optimizer.

mod adam;
mod init;
mod tape;
mod tensor;

pub use adam::Adam;
pub use init::{init_weights, seeded_rng, xavier_bound, InitScheme, SeededRng};
pub use tape::{CustomOp, Tape, Var, LAYER_NORM_EPS};
pub use tensor::{NamedArray, ParamId, ParamStore, Tensor, TensorError};
