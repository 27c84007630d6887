//! Perturbative evaluation of interacting thermal equilibrium (KMS) states for
//! scalar fields: mixed real-time/imaginary-time propagators, connected graph
//! enumeration with conservation rules, and numerical case studies at first and
//! second order.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod casestudies;
pub mod cli;
pub mod cutoff;
pub mod error;
pub mod expansion;
pub mod graphs;
mod linalg;
pub mod propagators;
pub mod quadrature;

pub use error::{Error, Result};
