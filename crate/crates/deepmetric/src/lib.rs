//! Experiment runner for `deepmetric-core`: configuration, dataset files,
//! checkpoints, reports and the command implementations behind the
//! `deepmetric` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod report;

pub use error::{CliError, Result};
