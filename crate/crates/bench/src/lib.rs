//! Experiment harness for transmit beamspace designs: TOML configuration,
//! Monte-Carlo RMSE and resolution curves, and report files.

pub mod config;
pub mod error;
pub mod experiment;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{BenchError, BenchResult};
pub use experiment::{prepare, run_experiment, traditional_mimo, CurvePoint, Experiment, Parts, Setup};
