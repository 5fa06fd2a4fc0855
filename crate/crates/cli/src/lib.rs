//! Experiment runner for the penalized obstacle solver.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod experiments;

pub use commands::{replay, run, run_config, sweep, validate_config, Options, RunResult};
pub use config::ExperimentConfig;
