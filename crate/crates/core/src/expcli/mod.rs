//! Experiment runner behind the `euler-lab` binary: configuration, the five
//! scenarios and their output files.
//!
//! Every scenario writes `summary.json` (config echo, version, timings,
//! fitted quantities and named checks) next to its CSV and JSON products
//! into the output directory.

pub mod config;
pub mod report;
pub mod scenarios;

pub use config::{ExperimentConfig, Scenario};
pub use report::{Cell, OutputDir, Table};
pub use scenarios::{run, Outcome, VERSION};
