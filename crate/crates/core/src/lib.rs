//! Penalized non-smooth stochastic oscillators: simulation, Lyapunov drift
//! certification, Feynman–Kac finite differences and threshold crossing.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod crossing;
pub mod error;
pub mod lyapunov;
pub mod model;
pub mod pde;
pub mod simulate;

pub use error::{Error, Result};
