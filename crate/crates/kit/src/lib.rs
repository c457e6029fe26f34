// SPDX-License-Identifier: Apache-2.0

//! Experiment runner and command-line front end for `chernoff-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod matrix_file;
pub mod report;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::{KitError, KitResult};
pub use report::{RunSummary, Verdict};
pub use runner::{emit_reports, run, RunOptions};
