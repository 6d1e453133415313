//! Command-line front end: configuration, run directories and the
//! subcommands of the `chance-design` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod run;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
