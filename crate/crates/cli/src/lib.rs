//! Command-line front end: pretraining, pruning runs, evaluation and
//! convergence plots.

pub mod commands;
pub mod config;
pub mod curves;
pub mod error;
pub mod report;

pub use error::{CliError, CliResult};
