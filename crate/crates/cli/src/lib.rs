//! Experiment driver for `mess-core`: configuration files, dataset
//! generation, chain execution and CSV/JSON result files.

pub mod commands;
pub mod config;
pub mod output;
pub mod seeds;

pub use commands::{CliError, CliResult};
