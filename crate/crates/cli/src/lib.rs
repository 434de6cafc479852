//! Command-line front end: configuration, the subcommand runners and their
//! CSV/JSON/SVG outputs.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;

pub use commands::{run, Report};
pub use config::{resolve, Command, Overrides, RunConfig};
pub use error::{CliError, CliResult};
