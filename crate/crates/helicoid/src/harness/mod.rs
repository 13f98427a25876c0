//! Experiment harness: configuration, exponent prechecks, input generators, suites and reports.

pub mod config;
pub mod exponents;
pub mod inputs;
pub mod report;
pub mod suites;

pub use config::{ExperimentConfig, Suite};
pub use report::{StabilityReport, TrialReport};
pub use suites::{run, run_stability, run_suite, sparse_instance, vvst_instance};
