//! Mean and covariance estimation pipelines.
//!
//! Magnitudes come from postselection probabilities of the transduced state;
//! signs come from the Hadamard sign test on the residual flag qubit.
//!
//! * mean, feature `j`: `U_M`, transduction with `|x_ij|`, signed load,
//!   `U_M^-1`. The all-zeros-with-flag-1 outcome has probability `mu_j^2`.
//! * covariance, pair `(j, k)`: transduce `|x_ij|`, postselect reference 0 and
//!   flag 1 (probability `P21 = sum x_ij^2 / M`), reset the flag with X,
//!   transduce `|x_ik|`, load both signs, `U_M^-1`. The same outcome now has
//!   probability `P22` and `|C'_jk| = M sqrt(P21 P22) / (M - 1)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{amplitude_transduction, signed_load, signed_load_pair, Comparator, ComparatorMode};
use crate::error::{Error, Result};
use crate::fixedpoint::QuantizedDataset;
use crate::rng::{stream, Phase, StreamRng};
use crate::signtest::{
    required_shots, run_sign_test, run_sign_test_adaptive, run_sign_test_exact, Sign, SignVerdict,
};
use crate::statevector::{binomial, RegisterKind, RegisterLayout, StateVector, DEFAULT_QUBIT_CAP};

/// Zeroing threshold used by the exact backend when none is given.
pub const EXACT_EPSILON_MU: f64 = 1e-12;
/// Zeroing threshold used by the shot backend when none is given.
pub const SHOTS_EPSILON_MU: f64 = 1e-3;
pub const DEFAULT_DELTA: f64 = 0.1;

const FIRST_FOUR_ZERO: [(RegisterKind, usize); 4] = [
    (RegisterKind::Index, 0),
    (RegisterKind::Sign, 0),
    (RegisterKind::Data, 0),
    (RegisterKind::Reference, 0),
];

const SUCCESS: [(RegisterKind, usize); 5] = [
    (RegisterKind::Index, 0),
    (RegisterKind::Sign, 0),
    (RegisterKind::Data, 0),
    (RegisterKind::Reference, 0),
    (RegisterKind::Flag, 1),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Probabilities read directly from the amplitudes.
    Exact,
    /// Finite-shot sampling.
    Shots,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationBudget {
    pub backend: Backend,
    /// Measurements per magnitude estimate (shot backend).
    pub shots_magnitude: u64,
    /// Sign-test failure budget.
    pub delta: f64,
    /// Magnitudes below this are reported as zero and skip the sign test.
    pub epsilon_mu: f64,
    pub seed: u64,
    pub comparator: ComparatorMode,
    pub qubit_cap: usize,
    /// Size sign tests from a pilot run instead of analytic floors.
    pub adaptive_sign: bool,
}

impl EstimationBudget {
    pub fn exact() -> Self {
        Self {
            backend: Backend::Exact,
            shots_magnitude: 0,
            delta: DEFAULT_DELTA,
            epsilon_mu: EXACT_EPSILON_MU,
            seed: 0,
            comparator: ComparatorMode::Functional,
            qubit_cap: DEFAULT_QUBIT_CAP,
            adaptive_sign: false,
        }
    }

    pub fn shots(shots_magnitude: u64, seed: u64) -> Self {
        Self {
            backend: Backend::Shots,
            shots_magnitude,
            epsilon_mu: SHOTS_EPSILON_MU,
            seed,
            ..Self::exact()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.backend == Backend::Shots && self.shots_magnitude == 0 {
            return Err(Error::InvalidArgument("shot backend needs shots_magnitude >= 1".into()));
        }
        if !(self.epsilon_mu > 0.0 && self.epsilon_mu < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon_mu must lie in (0, 1), got {}",
                self.epsilon_mu
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }

    fn comparator(&self, width: usize) -> Result<Comparator> {
        Comparator::new(self.comparator, width)
    }

    fn rng(&self, element: u64, phase: Phase) -> StreamRng {
        stream(self.seed, element, phase)
    }
}

fn check_feature(dataset: &QuantizedDataset, j: usize) -> Result<()> {
    if j >= dataset.cols() {
        return Err(Error::InvalidArgument(format!(
            "feature {j} out of range for {} columns",
            dataset.cols()
        )));
    }
    Ok(())
}

fn fresh_state(dataset: &QuantizedDataset, budget: &EstimationBudget) -> Result<StateVector> {
    let layout = RegisterLayout::new(dataset.index_width(), dataset.bits() as usize);
    let mut state = StateVector::init_zero(layout, budget.qubit_cap)?;
    state.apply_uniform_index(dataset.rows())?;
    Ok(state)
}

/// Mean pipeline for feature `j`, up to and including `U_M^-1`.
pub fn mean_pipeline(dataset: &QuantizedDataset, j: usize, budget: &EstimationBudget) -> Result<StateVector> {
    check_feature(dataset, j)?;
    let mut state = fresh_state(dataset, budget)?;
    amplitude_transduction(&mut state, dataset, j, budget.comparator(dataset.bits() as usize)?)?;
    signed_load(&mut state, dataset, j)?;
    state.apply_uniform_index_inverse(dataset.rows())?;
    Ok(state)
}

/// First covariance stage: the transduced state for feature `j`, before postselection.
pub fn covariance_first_stage(
    dataset: &QuantizedDataset,
    j: usize,
    budget: &EstimationBudget,
) -> Result<StateVector> {
    check_feature(dataset, j)?;
    let mut state = fresh_state(dataset, budget)?;
    amplitude_transduction(&mut state, dataset, j, budget.comparator(dataset.bits() as usize)?)?;
    Ok(state)
}

/// Postselected first stage `(P21, state)`; fails when feature `j` is all zero.
pub fn covariance_postselect(first: &StateVector) -> Result<(f64, StateVector)> {
    let out = first.postselect(&[(RegisterKind::Reference, 0), (RegisterKind::Flag, 1)])?;
    let collapsed = out.collapsed.expect("postselect always returns the collapsed state");
    Ok((out.probability, collapsed))
}

/// Second covariance stage on the postselected state, up to and including `U_M^-1`.
pub fn covariance_second_stage(
    mut state: StateVector,
    dataset: &QuantizedDataset,
    j: usize,
    k: usize,
    budget: &EstimationBudget,
) -> Result<StateVector> {
    check_feature(dataset, k)?;
    state.apply_x(state.layout().flag_qubit());
    amplitude_transduction(&mut state, dataset, k, budget.comparator(dataset.bits() as usize)?)?;
    signed_load_pair(&mut state, dataset, j, k)?;
    state.apply_uniform_index_inverse(dataset.rows())?;
    Ok(state)
}

fn mean_element(j: usize) -> u64 {
    j as u64
}

fn cov_element(dataset: &QuantizedDataset, j: usize, k: usize) -> u64 {
    let d = dataset.cols() as u64;
    d + j as u64 * d + k as u64
}

/// Clamps analytic floors onto a normalized pair so they are admissible shot-sizing inputs.
fn admissible_floors(alpha: f64, beta: f64) -> (f64, f64) {
    let (a, b) = (alpha.min(1.0), beta.min(1.0));
    let norm = (a * a + b * b).sqrt();
    if norm > 1.0 {
        (a / norm, b / norm)
    } else {
        (a, b)
    }
}

fn bernoulli_frequency(trials: u64, p: f64, rng: &mut StreamRng) -> Result<f64> {
    if trials == 0 {
        return Ok(0.0);
    }
    Ok(binomial(trials, p, rng)? as f64 / trials as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMagnitude {
    pub magnitude: f64,
    /// Exact or observed probability of the success outcome.
    pub p_mu: f64,
    pub shots_used: u64,
}

/// `|mu_j| = sqrt(P_mu)`.
pub fn estimate_mean_magnitude(
    dataset: &QuantizedDataset,
    j: usize,
    budget: &EstimationBudget,
) -> Result<MeanMagnitude> {
    budget.validate()?;
    let state = mean_pipeline(dataset, j, budget)?;
    match budget.backend {
        Backend::Exact => {
            let p_mu = state.probability_of(&SUCCESS)?;
            Ok(MeanMagnitude {
                magnitude: p_mu.sqrt(),
                p_mu,
                shots_used: 0,
            })
        }
        Backend::Shots => {
            let shots = budget.shots_magnitude;
            let mut rng = budget.rng(mean_element(j), Phase::Magnitude);
            let out = state.sample_pattern(&SUCCESS, shots, &mut rng)?;
            let hits = out.counts.get(&1).copied().unwrap_or(0);
            let p_mu = hits as f64 / shots as f64;
            Ok(MeanMagnitude {
                magnitude: p_mu.sqrt(),
                p_mu,
                shots_used: shots,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignOutcome {
    pub verdict: SignVerdict,
    /// Exact or observed postselection probability of the first four registers on zero.
    pub postselection: f64,
    pub alpha_floor: Option<f64>,
    pub beta_floor: Option<f64>,
}

fn run_test(
    collapsed: StateVector,
    floors: Option<(f64, f64)>,
    element: u64,
    budget: &EstimationBudget,
) -> Result<(SignVerdict, Option<(f64, f64)>)> {
    match budget.backend {
        Backend::Exact => Ok((run_sign_test_exact(|| Ok(collapsed))?, None)),
        Backend::Shots => {
            let (a, b) = floors.expect("shot backend always computes floors");
            let (a, b) = admissible_floors(a, b);
            let mut rng = budget.rng(element, Phase::SignTest);
            let verdict = if budget.adaptive_sign {
                run_sign_test_adaptive(|| Ok(collapsed.clone()), budget.delta, a * b, &mut rng)?
            } else {
                let shots = required_shots(a, b, budget.delta)?;
                run_sign_test(|| Ok(collapsed), shots, &mut rng)?
            };
            Ok((verdict, Some((a, b))))
        }
    }
}

/// Sign of `mu_j` from the flag state left after postselecting the first four registers on zero.
pub fn estimate_mean_sign(
    dataset: &QuantizedDataset,
    j: usize,
    budget: &EstimationBudget,
) -> Result<SignOutcome> {
    budget.validate()?;
    let state = mean_pipeline(dataset, j, budget)?;
    let out = state.postselect(&FIRST_FOUR_ZERO)?;
    let collapsed = out.collapsed.expect("postselect always returns the collapsed state");
    let element = mean_element(j);
    let (postselection, floors) = match budget.backend {
        Backend::Exact => (out.probability, None),
        Backend::Shots => {
            let n = budget.shots_magnitude;
            let mut rng = budget.rng(element, Phase::Postselection);
            let p11 = bernoulli_frequency(n, out.probability, &mut rng)?.max(1.0 / n as f64);
            let alpha = budget.epsilon_mu / p11.sqrt();
            let beta = (-(dataset.bits() as f64)).exp2() / p11.sqrt();
            (p11, Some((alpha, beta)))
        }
    };
    let (verdict, floors) = run_test(collapsed, floors, element, budget)?;
    Ok(SignOutcome {
        verdict,
        postselection,
        alpha_floor: floors.map(|f| f.0),
        beta_floor: floors.map(|f| f.1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovMagnitude {
    pub magnitude: f64,
    pub p21: f64,
    pub p22: f64,
    /// Copies prepared in the first stage.
    pub shots_first: u64,
    /// Copies that survived the first postselection.
    pub shots_second: u64,
}

fn check_pair(dataset: &QuantizedDataset, j: usize, k: usize) -> Result<()> {
    if dataset.rows() < 2 {
        return Err(Error::InvalidArgument("covariance needs at least 2 data points".into()));
    }
    check_feature(dataset, k)?;
    if j > k {
        return Err(Error::InvalidArgument(format!("expected j <= k, got ({j}, {k})")));
    }
    Ok(())
}

fn cov_scale(dataset: &QuantizedDataset) -> f64 {
    let m = dataset.rows() as f64;
    m / (m - 1.0)
}

/// `|C'_jk| = M sqrt(P21 P22) / (M - 1)`.
///
/// Fails with [`Error::PostselectionImpossible`] when feature `j` is identically zero.
pub fn estimate_cov_prime_magnitude(
    dataset: &QuantizedDataset,
    j: usize,
    k: usize,
    budget: &EstimationBudget,
) -> Result<CovMagnitude> {
    budget.validate()?;
    check_pair(dataset, j, k)?;
    let first = covariance_first_stage(dataset, j, budget)?;
    let (p21, collapsed) = covariance_postselect(&first)?;
    let second = covariance_second_stage(collapsed, dataset, j, k, budget)?;
    let p22 = second.probability_of(&SUCCESS)?;
    let scale = cov_scale(dataset);
    match budget.backend {
        Backend::Exact => Ok(CovMagnitude {
            magnitude: scale * (p21 * p22).sqrt(),
            p21,
            p22,
            shots_first: 0,
            shots_second: 0,
        }),
        Backend::Shots => {
            let element = cov_element(dataset, j, k);
            let n = budget.shots_magnitude;
            let survivors = binomial(n, p21, &mut budget.rng(element, Phase::Magnitude))?;
            let hits = binomial(survivors, p22, &mut budget.rng(element, Phase::SecondStage))?;
            let p21_hat = survivors as f64 / n as f64;
            let p22_hat = if survivors == 0 { 0.0 } else { hits as f64 / survivors as f64 };
            Ok(CovMagnitude {
                magnitude: scale * (p21_hat * p22_hat).sqrt(),
                p21: p21_hat,
                p22: p22_hat,
                shots_first: n,
                shots_second: survivors,
            })
        }
    }
}

/// Sign of `C'_jk` from the flag state of the second stage.
///
/// `magnitude` is the result of [`estimate_cov_prime_magnitude`] for the same pair and
/// `mu_j_hat` the estimated mean of feature `j`; both feed the shot-mode floors.
pub fn estimate_cov_prime_sign(
    dataset: &QuantizedDataset,
    j: usize,
    k: usize,
    budget: &EstimationBudget,
    magnitude: &CovMagnitude,
    mu_j_hat: f64,
) -> Result<SignOutcome> {
    budget.validate()?;
    check_pair(dataset, j, k)?;
    let first = covariance_first_stage(dataset, j, budget)?;
    let (_, collapsed) = covariance_postselect(&first)?;
    let second = covariance_second_stage(collapsed, dataset, j, k, budget)?;
    let out = second.postselect(&FIRST_FOUR_ZERO)?;
    let collapsed = out.collapsed.expect("postselect always returns the collapsed state");
    let element = cov_element(dataset, j, k);
    let (postselection, floors) = match budget.backend {
        Backend::Exact => (out.probability, None),
        Backend::Shots => {
            let survivors = magnitude.shots_second.max(1);
            let mut rng = budget.rng(element, Phase::Postselection);
            let p23 = bernoulli_frequency(survivors, out.probability, &mut rng)?.max(1.0 / survivors as f64);
            let p21 = magnitude.p21.max(1.0 / magnitude.shots_first.max(1) as f64);
            let denom = (p21 * p23).sqrt();
            let alpha = budget.epsilon_mu / (cov_scale(dataset) * denom);
            let beta = mu_j_hat.abs().max(p21) * (-(dataset.bits() as f64)).exp2() / denom;
            (p23, Some((alpha, beta)))
        }
    };
    let (verdict, floors) = run_test(collapsed, floors, element, budget)?;
    Ok(SignOutcome {
        verdict,
        postselection,
        alpha_floor: floors.map(|f| f.0),
        beta_floor: floors.map(|f| f.1),
    })
}

/// `C_jk = C'_jk - M mu_j mu_k / (M - 1)`, computed for `j <= k` and mirrored.
pub fn assemble_covariance(mu_hat: &[f64], cov_prime_hat: &[Vec<f64>], rows: usize) -> Result<Vec<Vec<f64>>> {
    let d = mu_hat.len();
    if cov_prime_hat.len() != d || cov_prime_hat.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidArgument("mean and covariance dimensions disagree".into()));
    }
    if rows < 2 {
        return Err(Error::InvalidArgument("covariance needs at least 2 data points".into()));
    }
    let m = rows as f64;
    let mut c = vec![vec![0.0; d]; d];
    for j in 0..d {
        for k in j..d {
            let v = cov_prime_hat[j][k] - m * mu_hat[j] * mu_hat[k] / (m - 1.0);
            c[j][k] = v;
            c[k][j] = v;
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanElement {
    pub feature: usize,
    pub magnitude: f64,
    pub sign: Sign,
    pub value: f64,
    pub p_mu: f64,
    pub shots_magnitude: u64,
    /// True when the magnitude fell below epsilon_mu and no sign test ran.
    pub sign_skipped: bool,
    pub sign_test: Option<SignOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovElement {
    pub j: usize,
    pub k: usize,
    pub magnitude: f64,
    pub sign: Sign,
    /// Signed `C'_jk`.
    pub value: f64,
    pub p21: f64,
    pub p22: f64,
    pub shots_first: u64,
    pub shots_second: u64,
    pub sign_skipped: bool,
    pub sign_test: Option<SignOutcome>,
    /// Set when the pipeline could not run (e.g. feature `j` identically zero).
    pub degenerate: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub backend: Backend,
    pub rows: usize,
    pub cols: usize,
    pub bits: u32,
    pub epsilon_mu: f64,
    pub delta: f64,
    pub seed: u64,
    pub mu_hat: Vec<f64>,
    pub c_prime_hat: Vec<Vec<f64>>,
    pub cov_hat: Vec<Vec<f64>>,
    pub means: Vec<MeanElement>,
    pub covariances: Vec<CovElement>,
}

fn fit_mean(dataset: &QuantizedDataset, j: usize, budget: &EstimationBudget) -> Result<MeanElement> {
    let mag = estimate_mean_magnitude(dataset, j, budget)?;
    let (sign, sign_skipped, sign_test) = if mag.magnitude < budget.epsilon_mu {
        (Sign::NonNegative, true, None)
    } else {
        let s = estimate_mean_sign(dataset, j, budget)?;
        (s.verdict.sign, false, Some(s))
    };
    let magnitude = if sign_skipped { 0.0 } else { mag.magnitude };
    Ok(MeanElement {
        feature: j,
        magnitude,
        sign,
        value: sign.apply(magnitude),
        p_mu: mag.p_mu,
        shots_magnitude: mag.shots_used,
        sign_skipped,
        sign_test,
    })
}

fn fit_cov(
    dataset: &QuantizedDataset,
    j: usize,
    k: usize,
    mu_hat: &[f64],
    budget: &EstimationBudget,
) -> Result<CovElement> {
    let mag = match estimate_cov_prime_magnitude(dataset, j, k, budget) {
        Ok(m) => m,
        Err(Error::PostselectionImpossible { probability }) => {
            return Ok(CovElement {
                j,
                k,
                magnitude: 0.0,
                sign: Sign::NonNegative,
                value: 0.0,
                p21: probability,
                p22: 0.0,
                shots_first: 0,
                shots_second: 0,
                sign_skipped: true,
                sign_test: None,
                degenerate: Some(format!("feature {j} is identically zero")),
            })
        }
        Err(e) => return Err(e),
    };
    let (sign, sign_skipped, sign_test) = if mag.magnitude < budget.epsilon_mu {
        (Sign::NonNegative, true, None)
    } else {
        let s = estimate_cov_prime_sign(dataset, j, k, budget, &mag, mu_hat[j])?;
        (s.verdict.sign, false, Some(s))
    };
    let magnitude = if sign_skipped { 0.0 } else { mag.magnitude };
    Ok(CovElement {
        j,
        k,
        magnitude,
        sign,
        value: sign.apply(magnitude),
        p21: mag.p21,
        p22: mag.p22,
        shots_first: mag.shots_first,
        shots_second: mag.shots_second,
        sign_skipped,
        sign_test,
        degenerate: None,
    })
}

/// Estimates every mean and every `j <= k` covariance element and assembles `C`.
///
/// Elements run independently (in parallel) with their own random streams, so
/// the report is identical for a fixed seed regardless of scheduling.
pub fn fit(dataset: &QuantizedDataset, budget: &EstimationBudget) -> Result<EstimateReport> {
    budget.validate()?;
    if dataset.rows() < 2 {
        return Err(Error::InvalidArgument("fitting needs at least 2 data points".into()));
    }
    let d = dataset.cols();
    let means = (0..d)
        .into_par_iter()
        .map(|j| fit_mean(dataset, j, budget))
        .collect::<Result<Vec<_>>>()?;
    let mu_hat: Vec<f64> = means.iter().map(|e| e.value).collect();

    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|j| (j..d).map(move |k| (j, k))).collect();
    let covariances = pairs
        .par_iter()
        .map(|&(j, k)| fit_cov(dataset, j, k, &mu_hat, budget))
        .collect::<Result<Vec<_>>>()?;

    let mut c_prime_hat = vec![vec![0.0; d]; d];
    for e in &covariances {
        c_prime_hat[e.j][e.k] = e.value;
        c_prime_hat[e.k][e.j] = e.value;
    }
    let cov_hat = assemble_covariance(&mu_hat, &c_prime_hat, dataset.rows())?;
    Ok(EstimateReport {
        backend: budget.backend,
        rows: dataset.rows(),
        cols: d,
        bits: dataset.bits(),
        epsilon_mu: budget.epsilon_mu,
        delta: budget.delta,
        seed: budget.seed,
        mu_hat,
        c_prime_hat,
        cov_hat,
        means,
        covariances,
    })
}
