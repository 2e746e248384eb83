//! Experiment harness for linear stochastic approximation: configuration,
//! experiment runners and CSV/JSON result emitters behind the `lsalab` binary.
//!
//! - [`cli`]: argument parsing and the run/emit flow of the binary.
//! - [`config`]: the JSON experiment document and its validation.
//! - [`experiments`]: one runner per experiment, deterministic in the seed.
//! - [`output`]: result rows and their encodings.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod experiments;
pub mod output;

pub use config::{ConfigError, Experiment, ExperimentConfig};
pub use experiments::{run, run_with_workers};
pub use output::{ResultRow, ResultSet};
