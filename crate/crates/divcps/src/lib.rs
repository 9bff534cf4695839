//! Batch experiment runner for `divcps-core`: TOML configs, parallel path
//! ensembles, and the results.csv / summary.json / certificate.txt
//! artifacts.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::ExperimentConfig;
pub use error::{exit, RunError};
pub use output::{Outcome, Row, SCHEMA_VERSION};
pub use run::{execute, run, summary, RunReport, THREADS_ENV};

/// Parses `text` and returns every violated precondition.
pub fn validate_text(text: &str) -> Vec<String> {
    match ExperimentConfig::from_toml(text) {
        Ok(cfg) => cfg.validate(),
        Err(RunError::Validation(v)) => v,
        Err(e) => vec![e.to_string()],
    }
}
