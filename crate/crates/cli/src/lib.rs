//! Configuration handling and subcommands of the `fluxlab` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::{parse_config, Experiment, ExperimentConfig, Overrides};
pub use error::CliError;
