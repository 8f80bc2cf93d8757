use qgad_core::estimators::{EXACT_EPSILON_MU, SHOTS_EPSILON_MU};
use qgad_core::verify::{self, Suite, SuiteReport};
use qgad_core::{
    allocate_epsilon_mu, classical_fit, classical_moments, fit, quantile, shot_scaling, Backend, EstimationBudget,
    GaussianModel, QuantizedDataset, ScalingTable, Verdict,
};
use sha2::{Digest, Sha256};

use crate::artifact::{
    ClassicalReference, Deltas, DetectionReport, DetectionSummary, EpsilonChoice, EpsilonSource, FitArtifact,
    ModelSummary, Provenance, ResolvedThreshold, RowVerdict, RunConfig, ThresholdPolicy, FIT_FORMAT,
};
use crate::error::{CliError, Result};
use crate::ingest::{ingest_bytes, read_bytes};

/// Picks `epsilon_mu`: explicit value, allocation from `epsilon`, or the backend default.
pub fn resolve_epsilon(config: &RunConfig, dataset: &QuantizedDataset) -> Result<EpsilonChoice> {
    match (config.epsilon, config.epsilon_mu) {
        (Some(_), Some(_)) => Err(CliError::Usage("give at most one of --epsilon and --epsilon-mu".into())),
        (None, Some(epsilon_mu)) => Ok(EpsilonChoice {
            epsilon_mu,
            source: EpsilonSource::Explicit,
            kappa: config.kappa,
        }),
        (Some(epsilon), None) => {
            let (kappa, source) = match config.kappa {
                Some(k) => (k, EpsilonSource::AllocatedFromKappa),
                None => (
                    classical_fit(dataset)?.effective_kappa()?,
                    EpsilonSource::AllocatedFromClassicalFit,
                ),
            };
            Ok(EpsilonChoice {
                epsilon_mu: allocate_epsilon_mu(epsilon, dataset.cols(), kappa)?,
                source,
                kappa: Some(kappa),
            })
        }
        (None, None) => Ok(EpsilonChoice {
            epsilon_mu: match config.backend {
                Backend::Exact => EXACT_EPSILON_MU,
                Backend::Shots => SHOTS_EPSILON_MU,
            },
            source: EpsilonSource::Default,
            kappa: config.kappa,
        }),
    }
}

pub fn budget(config: &RunConfig, epsilon_mu: f64) -> EstimationBudget {
    EstimationBudget {
        backend: config.backend,
        shots_magnitude: if config.backend == Backend::Shots { config.shots } else { 0 },
        delta: config.delta,
        epsilon_mu,
        seed: config.seed,
        comparator: config.comparator,
        qubit_cap: config.qubit_cap,
        adaptive_sign: config.adaptive_sign,
    }
}

fn resolve_threshold(policy: ThresholdPolicy, training: &[f64]) -> Result<ResolvedThreshold> {
    let sigma = match policy {
        ThresholdPolicy::Value(v) if v >= 0.0 => v,
        ThresholdPolicy::Value(v) => return Err(CliError::Usage(format!("threshold must be non-negative, got {v}"))),
        ThresholdPolicy::Quantile(q) => quantile(training, q)?,
    };
    Ok(ResolvedThreshold { policy, sigma })
}

fn detection_model(mu: Vec<f64>, cov: Vec<Vec<f64>>, ridge: Option<f64>) -> Result<GaussianModel> {
    let model = GaussianModel::new(mu, cov)?;
    let model = match ridge {
        Some(lambda) => model.with_ridge(lambda)?,
        None => model,
    };
    // surfaces the singular direction when the factorisation failed
    model.log_determinant()?;
    Ok(model)
}

pub fn cmd_fit(config: &RunConfig) -> Result<FitArtifact> {
    let bytes = read_bytes(&config.input)?;
    let ingested = ingest_bytes(&config.input, &bytes, config.bits, config.skip_header)?;
    let dataset = &ingested.dataset;
    let epsilon = resolve_epsilon(config, dataset)?;
    let report = fit(dataset, &budget(config, epsilon.epsilon_mu))?;

    let (mu, cov) = classical_moments(dataset)?;
    let classical = ClassicalReference { mu, cov };
    let deltas = Deltas::between(&report, &classical);

    let model = detection_model(report.mu_hat.clone(), report.cov_hat.clone(), config.ridge)?;
    let training_densities = dataset
        .decoded_rows()
        .iter()
        .map(|x| model.density(x))
        .collect::<qgad_core::Result<Vec<f64>>>()?;
    let threshold = resolve_threshold(config.threshold, &training_densities)?;

    Ok(FitArtifact {
        format: FIT_FORMAT.into(),
        config: config.clone(),
        ingest: ingested.report,
        epsilon,
        classical,
        deltas,
        model: ModelSummary {
            mu: model.mean().to_vec(),
            cov: model.covariance(),
            ridge: config.ridge,
            log_determinant: model.log_determinant()?,
            eigenvalues: model.eigenvalues(),
        },
        report,
        training_densities,
        threshold,
        provenance: Provenance {
            config_hash: config.hash(),
            input_sha256: hex::encode(Sha256::digest(&bytes)),
            seed: config.seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
        },
    })
}

/// Scores `queries` against the artifact's model. `policy` overrides the stored threshold.
pub fn cmd_detect(
    artifact: &FitArtifact,
    queries: &[Vec<f64>],
    policy: Option<ThresholdPolicy>,
) -> Result<DetectionReport> {
    // the stored covariance already includes any ridge
    let model = detection_model(artifact.model.mu.clone(), artifact.model.cov.clone(), None)?;
    let threshold = match policy {
        Some(p) => resolve_threshold(p, &artifact.training_densities)?,
        None => artifact.threshold,
    };
    let d = model.dim();
    let mut verdicts = Vec::with_capacity(queries.len());
    for (row, x) in queries.iter().enumerate() {
        if x.len() != d {
            return Err(CliError::Data(format!(
                "query row {} has {} features, model has {d}",
                row + 1,
                x.len()
            )));
        }
        let det = model.detect(x, threshold.sigma)?;
        verdicts.push(RowVerdict {
            row,
            density: det.density,
            verdict: det.verdict,
        });
    }
    let anomalies = verdicts.iter().filter(|v| v.verdict == Verdict::Anomaly).count();
    Ok(DetectionReport {
        threshold,
        summary: DetectionSummary {
            rows: verdicts.len(),
            anomalies,
            normal: verdicts.len() - anomalies,
        },
        verdicts,
    })
}

pub fn cmd_verify(suites: &[Suite], seed: u64) -> Result<Vec<SuiteReport>> {
    suites
        .iter()
        .map(|&s| verify::run(s, seed).map_err(CliError::from))
        .collect()
}

pub fn cmd_scaling(config: &RunConfig, grid: &[u64], repeats: u64) -> Result<ScalingTable> {
    let bytes = read_bytes(&config.input)?;
    let ingested = ingest_bytes(&config.input, &bytes, config.bits, config.skip_header)?;
    let epsilon = resolve_epsilon(config, &ingested.dataset)?;
    let base = EstimationBudget {
        backend: Backend::Shots,
        shots_magnitude: 1,
        ..budget(config, epsilon.epsilon_mu)
    };
    shot_scaling(&ingested.dataset, grid, repeats, &base).map_err(|e| match e {
        qgad_core::Error::InvalidArgument(msg) => CliError::Usage(msg),
        other => other.into(),
    })
}

/// True when every check in every suite passed.
pub fn all_passed(reports: &[SuiteReport]) -> bool {
    reports.iter().all(SuiteReport::passed)
}
