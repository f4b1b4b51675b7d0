//! Experiment harness behind the `effort` command.
//!
//! [`harness::run_synthetic`] and [`real::run_real`] repeat an experiment
//! over seeded datasets and collect one [`report::Record`] per repeat and
//! method; [`report::ExperimentReport`] renders them as CSV and as an
//! aggregate table. Repeats can run on a thread pool without changing any
//! output byte, because every repeat draws from its own substream and
//! records are kept in repeat order.

pub mod app;
pub mod config;
pub mod error;
pub mod harness;
pub mod plot;
pub mod real;
pub mod report;

pub use config::{ModelChoice, RunConfig};
pub use error::{exit, CliError};
pub use harness::run_synthetic;
pub use real::run_real;
pub use report::{ExperimentReport, Record, Summary};
