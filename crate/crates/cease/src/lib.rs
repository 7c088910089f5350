//! File formats, configuration and experiment driver around `cease-core`.

pub mod config;
pub mod dataset;
pub mod diagnose;
pub mod error;
pub mod experiment;
pub mod format;
pub mod plot;

pub use config::{parse as parse_config, ExperimentConfig};
pub use error::{CliError, Result};
pub use experiment::{run_experiment, RunOptions, RunReport};
