//! Library side of the `pointexplainer` command: run configuration and the
//! subcommands, usable from tests and other programs.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use commands::{cmd_explain, cmd_report, cmd_synth, cmd_train, cmd_verify};
pub use config::RunConfig;
pub use error::CliError;
