//! Library half of the `qgad` command: ingestion, artifacts and the command bodies.

pub mod artifact;
pub mod commands;
pub mod error;
pub mod ingest;

pub use artifact::{DetectionReport, FitArtifact, RunConfig, ThresholdPolicy};
pub use error::{CliError, Result};
