//! File formats, run directories and subcommands on top of `gustcast-core`.

pub mod artifacts;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod table;

pub use error::{CliError, Result};
