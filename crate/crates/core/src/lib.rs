//! Tests for stochastic dominance between survival functions under right
//! censoring.
//!
//! The centerpiece is [`dominance::dominance_test`]: the scaled supremum of
//! the difference between two Kaplan-Meier curves, with an asymptotic p-value
//! upper bound obtained from the supremum distribution of the limiting
//! pooled Gaussian process, evaluated as a multivariate-normal rectangle
//! probability over a discretization grid. Classical weighted log-rank tests
//! and a Monte Carlo power-study harness round out the toolkit.

pub mod classical;
pub mod covariance;
pub mod density;
pub mod dominance;
pub mod error;
pub mod estimators;
pub mod mvn;
pub mod numerics;
pub mod simulation;

pub use error::{Error, Result};
