//! Minimax estimation of a coin's bias under absolute-error loss.
//!
//! The crate computes the penalty (risk) functions of estimator node sets,
//! certifies their maxima, solves for the equimax-optimal estimator, builds
//! least-favorable priors with Nash-equilibrium residuals, and tabulates
//! asymptotic diagnostics.

pub mod asymptotics;
pub mod bernstein;
pub mod error;
pub mod estimators;
pub mod game;
pub mod penalty;
pub mod report;
pub mod verify;

mod nelder_mead;

pub use error::{Error, Result};
