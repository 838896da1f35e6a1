//! Experiment driver for the delayed-feedback learners: config parsing, runs,
//! CSV and summary output, sweeps, and the re-accumulation check.

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod sweep;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use experiment::{run_experiment, Outcome};
