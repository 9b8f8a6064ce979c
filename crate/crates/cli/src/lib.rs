//! Experiment runner for the ddpmlab numerical laboratory.

pub mod config;
pub mod error;
pub mod experiments;
pub mod plotdata;
pub mod runner;
pub mod summary;

pub use config::{Experiment, ExperimentConfig};
pub use error::RunError;
pub use runner::{run, run_with_threads, RunOutput};
pub use summary::Summary;
