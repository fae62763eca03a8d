//! File formats, configuration, run bookkeeping and the `surqnn` command
//! line on top of `surqnn-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod idx;
pub mod manifest;
pub mod metrics;
pub mod parallel;

pub use error::{CliError, CliResult};
