//! Time-adaptive model predictive control for linear parabolic equations on
//! the unit interval.

pub mod banded;
pub mod checks;
pub mod error;
pub mod estimator;
pub mod fem1d;
pub mod grid;
pub mod mpc;
pub mod openloop;
pub mod problem;
pub mod problems;
pub mod quadrature;
pub mod report;
pub mod spacetime;

pub use error::{Error, Result};
