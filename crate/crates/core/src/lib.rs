//! Relative Fisher information metrics for neural subsystems and the
//! relative natural gradient optimizer built on them.

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod activations;
pub mod data;
pub mod experiment;
pub mod linalg;
pub mod metric;
pub mod network;
pub mod optim;
pub mod oracle;
pub mod whiten;
