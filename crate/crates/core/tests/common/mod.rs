//! Oracles shared by the integration tests and the acceptance gate.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;
pub mod gradcheck;
pub mod oracles;
