//! File formats, config loading and the command-line front end around
//! `lsc-core`.

pub mod cli;
pub mod config;
pub mod cost;
pub mod error;
pub mod files;
pub mod sweep;

pub use error::CliError;
