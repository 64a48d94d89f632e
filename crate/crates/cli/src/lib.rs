//! Experiment harness: configuration files and presets, Monte Carlo
//! orchestration over the simulator in `sapit_core`, and CSV output.

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod presets;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{CliError, ConfigIssue};
pub use experiment::{run_experiment, ExperimentOutput, ResultRow};
