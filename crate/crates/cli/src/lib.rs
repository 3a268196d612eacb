//! Batch runner, report generator and audits for the `qcnn` command.

pub mod audit;
pub mod config;
pub mod error;
pub mod features;
pub mod report;
pub mod runner;

pub use config::{Cell, ModelKind, RunConfig};
pub use error::{CliError, CliResult};
pub use runner::{execute, RunOptions, RunOutcome, RunRecord};
