//! Numerical core for constant-stepsize linear stochastic approximation (LSA).
//!
//! * [`linalg`]: Lyapunov, Σ and Riccati solvers, weighted norms and the
//!   spectral profile (a, α∞, κ_Q, b_Q) of a Hurwitz mean matrix.
//! * [`noise`]: model specifications and samplers for (A, b).
//! * [`engine`]: trajectory simulation, error decomposition, Monte Carlo
//!   estimators and exact moment oracles.
//! * [`bounds`]: closed-form high-probability and moment bounds.
//! * [`rosenthal`]: constants of the Rosenthal inequality for Markov chains.
//! * [`rng`], [`stats`]: reproducible random streams and 1-D statistics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod engine;
pub mod linalg;
pub mod noise;
pub mod rng;
pub mod rosenthal;
pub mod stats;
