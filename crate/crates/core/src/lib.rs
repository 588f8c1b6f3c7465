//! Exact excess-risk trajectories of gradient descent on overparameterized
//! linear regression, the effective dimensions of covariance spectra, and
//! time-variant generalization bounds evaluated along the trajectory.

// `!(x > 0.0)` is used on purpose so NaN fails the guard.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{} vs {} (tol {})", a, b, tol);
    }};
}

pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod instance;
pub mod linalg;
pub mod montecarlo;
pub mod spectrum;
pub mod stats;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
