//! Command implementations behind the `fan` executable.

pub mod args;
pub mod commands;
pub mod error;
pub mod experiment;
pub mod report;

pub use args::Cli;
pub use commands::run;
pub use error::{CliError, CliResult};
