//! Simulation toolkit for time-bin entanglement distribution with
//! polarization-based analyzers and CHSH tests.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod montecarlo;
pub mod optics;
pub mod qstate;

pub use error::{Error, Result};
