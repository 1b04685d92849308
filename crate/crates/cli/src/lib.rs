//! Config parsing and subcommands behind the `blackrt` binary.

pub mod commands;
pub mod config;

pub use commands::{CliError, Options, Outcome};
pub use config::{ConfigError, RunConfig};
