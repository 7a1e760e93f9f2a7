//! Library side of the `cleam` binary: config loading, label ingestion, mode
//! orchestration and report rendering.

pub mod config;
pub mod error;
pub mod ingest;
pub mod report;
pub mod run;

pub use error::{CliError, Result};
