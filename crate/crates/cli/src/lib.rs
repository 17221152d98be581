#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Experiment runner for the `fiberheat` library: configuration, the named
//! experiments, and reproducible artifact output.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod plots;

pub use config::{Experiment, ExperimentConfig};
pub use error::CliError;
pub use experiments::run_experiment;
pub use output::{RunSummary, Status, SummaryRow};
