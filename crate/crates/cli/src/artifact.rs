//! Persisted fit artifacts and detection reports.
//!
//! Artifacts are JSON with shortest round-trip decimal floats, so every numeric
//! field survives a save/load cycle bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use qgad_core::{Backend, ComparatorMode, EstimateReport, Verdict};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::ingest::IngestReport;

pub const FIT_FORMAT: &str = "qgad-fit/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "value")]
pub enum ThresholdPolicy {
    /// Fixed density threshold.
    Value(f64),
    /// Quantile `q` in `[0, 1]` of the training densities.
    Quantile(f64),
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::Quantile(0.01)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub bits: u32,
    pub skip_header: bool,
    pub backend: Backend,
    pub shots: u64,
    pub delta: f64,
    pub epsilon: Option<f64>,
    pub epsilon_mu: Option<f64>,
    pub kappa: Option<f64>,
    pub threshold: ThresholdPolicy,
    pub seed: u64,
    pub qubit_cap: usize,
    pub comparator: ComparatorMode,
    pub adaptive_sign: bool,
    pub ridge: Option<f64>,
}

impl RunConfig {
    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonSource {
    /// `--epsilon-mu` given directly.
    Explicit,
    /// Allocated from `--epsilon` with the supplied `--kappa`.
    AllocatedFromKappa,
    /// Allocated from `--epsilon` with kappa taken from the classical fit.
    AllocatedFromClassicalFit,
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonChoice {
    pub epsilon_mu: f64,
    pub source: EpsilonSource,
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalReference {
    pub mu: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// Estimate minus classical reference, element-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub mu: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub max_abs_mu: f64,
    pub max_abs_cov: f64,
}

impl Deltas {
    pub fn between(report: &EstimateReport, classical: &ClassicalReference) -> Self {
        let mu: Vec<f64> = report.mu_hat.iter().zip(&classical.mu).map(|(a, b)| a - b).collect();
        let cov: Vec<Vec<f64>> = report
            .cov_hat
            .iter()
            .zip(&classical.cov)
            .map(|(r, c)| r.iter().zip(c).map(|(a, b)| a - b).collect())
            .collect();
        let max_abs_mu = mu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let max_abs_cov = cov.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        Self {
            mu,
            cov,
            max_abs_mu,
            max_abs_cov,
        }
    }
}

/// The Gaussian used for detection: estimated moments plus optional ridge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub mu: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub ridge: Option<f64>,
    pub log_determinant: f64,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedThreshold {
    pub policy: ThresholdPolicy,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub input_sha256: String,
    pub seed: u64,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub format: String,
    pub config: RunConfig,
    pub ingest: IngestReport,
    pub epsilon: EpsilonChoice,
    pub report: EstimateReport,
    pub classical: ClassicalReference,
    pub deltas: Deltas,
    pub model: ModelSummary,
    /// Model density at every training row, in input order.
    pub training_densities: Vec<f64>,
    pub threshold: ResolvedThreshold,
    pub provenance: Provenance,
}

impl FitArtifact {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    pub fn from_json(path: &Path, text: &str) -> Result<Self> {
        let artifact: Self = serde_json::from_str(text).map_err(|e| CliError::Artifact {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if artifact.format != FIT_FORMAT {
            return Err(CliError::Artifact {
                path: path.to_path_buf(),
                message: format!("unsupported format {:?}, expected {FIT_FORMAT:?}", artifact.format),
            });
        }
        Ok(artifact)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(path, &text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowVerdict {
    pub row: usize,
    pub density: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub rows: usize,
    pub anomalies: usize,
    pub normal: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub threshold: ResolvedThreshold,
    pub verdicts: Vec<RowVerdict>,
    pub summary: DetectionSummary,
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
