//! Stochastic power-grid simulation with wind and storage, and
//! measurement-based estimation of inter-area oscillation modes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod ess;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod modes;
pub mod sim;
pub mod stochastic;

pub use error::{Error, Result};
