// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataio;
pub mod experiment;
pub mod labeling;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod scoring;
pub mod tensor_core;
