//! Statevector simulation of quantum Gaussian anomaly detection built on
//! arithmetic-free amplitude loading.
//!
//! Feature values are stored as sign-and-magnitude fixed-point numbers and read
//! through XOR oracles. A comparator against a uniformly random reference moves
//! each magnitude into the amplitude of a flag qubit ("amplitude transduction").
//! Postselection probabilities of the resulting states give `|mu_j|` and
//! `|C'_jk|`, and a Hadamard-then-measure test on the flag recovers their signs.
//! The estimates feed an ordinary multivariate Gaussian density used to flag
//! anomalies.
//!
//! Two backends are available: [`Backend::Exact`] reads probabilities from the
//! amplitudes and reproduces the classical fit to rounding error;
//! [`Backend::Shots`] samples finite measurement campaigns from seeded streams.
//!
//! ```
//! use qgad_core::{fit, quantize_dataset, classical_moments, EstimationBudget};
//!
//! let data = quantize_dataset(&[vec![0.5, 0.5], vec![0.25, -0.25], vec![-0.125, 0.375]], 3)?;
//! let report = fit(&data, &EstimationBudget::exact())?;
//! let (mu, cov) = classical_moments(&data)?;
//! assert!((report.mu_hat[1] - mu[1]).abs() < 1e-10);
//! assert!((report.cov_hat[0][1] - cov[0][1]).abs() < 1e-10);
//! # Ok::<(), qgad_core::Error>(())
//! ```

pub mod circuits;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod fixedpoint;
pub mod gad;
pub mod rng;
pub mod signtest;
pub mod statevector;
pub mod verify;

pub use circuits::{Comparator, ComparatorMode, OracleKind, OracleSpec};
pub use error::{Error, Result};
pub use estimators::{fit, Backend, CovElement, EstimateReport, EstimationBudget, MeanElement};
pub use experiment::{shot_scaling, ScalingRow, ScalingTable};
pub use fixedpoint::{decode, quantize, quantize_dataset, FixedPointValue, QuantizedDataset};
pub use gad::{
    allocate_epsilon_mu, classical_fit, classical_moments, density_error_bound, quantile, Detection,
    ErrorBudget, GaussianModel, Verdict,
};
pub use signtest::{Sign, SignTestPlan, SignVerdict};
pub use statevector::{MeasurementOutcome, RegisterKind, RegisterLayout, StateVector, DEFAULT_QUBIT_CAP};
