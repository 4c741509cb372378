//! Experiment runner for shift recovery, identity testing and the bounds lab.

pub mod config;
pub mod error;
pub mod report;
pub mod runner;

pub use config::{Algorithm, Args, Command, ExperimentConfig, OutputFormat, SecretSpec};
pub use error::{CliError, Result};
pub use runner::{run, RunOutput};
