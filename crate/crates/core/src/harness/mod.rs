//! Experiment orchestration: configuration, seed derivation and the two
//! experiment drivers.

pub mod config;
pub mod runner;
pub mod seed;

pub use config::{DataSource, ExperimentConfig, ExperimentKind, SynthSpec};
pub use runner::{run, run_empirical_accuracy, run_synthetic_intervals, run_to_dir, ResultRow, RunOutput};
