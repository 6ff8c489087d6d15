//! Experiment runner for the perchs-core solvers: configuration, job
//! fan-out, metric persistence and summaries.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod run;
pub mod summarize;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{CliError, Result};
