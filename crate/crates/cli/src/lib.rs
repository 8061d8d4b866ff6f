//! Command-line front end for `stable-ssm`.
//!
//! Every command is a library function taking a resolved [`config::RunConfig`]
//! and an output directory, so the binary is a thin argument parser.

pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use config::{Preset, RunConfig};
pub use error::{CliError, CliResult};
