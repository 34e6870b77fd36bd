//! Command-line driver: JSON run configuration, presets and the commands
//! that write CSV results.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run, Command};
pub use config::{RunConfig, PRESETS};
pub use error::{CliError, Result};
