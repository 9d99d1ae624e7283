//! Experiment harness: configuration, seeded runs, CSV emission, value
//! tables, and the oracle verification suite behind the `powfactor` CLI.

pub mod config;
pub mod plotdata;
pub mod runner;
pub mod sweep;
pub mod tables;
pub mod verify;

pub use config::ExperimentConfig;
pub use runner::{run_experiment, run_seed, ExperimentOutcome, MetricRow, SeedOutcome, SeedResult};
pub use tables::MatrixTables;
