//! File formats, configuration and drivers for the `riesz` command.
//!
//! Exit codes: 0 success, 1 other failure (including failed verification
//! checks), 2 invalid configuration, 3 unreadable data, 4 fitting or
//! numerical failure, 5 output not writable.

pub mod benchmark;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use error::CliError;
