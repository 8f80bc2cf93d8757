//! Hadamard sign test.
//!
//! For a real flag state `alpha|1> + beta|0>`, a Hadamard followed by a
//! measurement yields `|1>` with probability `1/2 - alpha*beta`. Observing a
//! frequency of at most one half means `alpha*beta >= 0`. Shot counts come
//! from the Cantelli bound on that frequency.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statevector::{
    binomial, RegisterKind, RegisterLayout, StateVector, DEFAULT_QUBIT_CAP,
};
use num_complex::Complex64;

/// Number of pilot shots used by the adaptive mode.
pub const PILOT_SHOTS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    NonNegative,
    Negative,
}

impl Sign {
    pub fn of(x: f64) -> Self {
        if x < 0.0 {
            Sign::Negative
        } else {
            Sign::NonNegative
        }
    }

    pub fn apply(self, magnitude: f64) -> f64 {
        match self {
            Sign::NonNegative => magnitude,
            Sign::Negative => -magnitude,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignVerdict {
    pub sign: Sign,
    /// Observed (or, in exact mode, true) frequency of outcome 1 after the Hadamard.
    pub p_hat: f64,
    pub shots_used: u64,
}

impl SignVerdict {
    /// Applies the decision rule: non-negative iff `p_hat <= 1/2`.
    pub fn from_frequency(p_hat: f64, shots_used: u64) -> Self {
        let sign = if p_hat <= 0.5 {
            Sign::NonNegative
        } else {
            Sign::Negative
        };
        Self {
            sign,
            p_hat,
            shots_used,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTestPlan {
    pub delta: f64,
    pub alpha_floor: f64,
    pub beta_floor: f64,
    pub shots: u64,
}

impl SignTestPlan {
    pub fn new(alpha_floor: f64, beta_floor: f64, delta: f64) -> Result<Self> {
        Ok(Self {
            delta,
            alpha_floor,
            beta_floor,
            shots: required_shots(alpha_floor, beta_floor, delta)?,
        })
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Shots sufficient to decide the sign with failure probability at most `delta`:
/// `ceil((1 - delta)(1 - 4a^2b^2) / (4 delta a^2 b^2))`, at least 1.
pub fn required_shots(alpha_floor: f64, beta_floor: f64, delta: f64) -> Result<u64> {
    check_delta(delta)?;
    if !(alpha_floor.is_finite() && beta_floor.is_finite()) || alpha_floor < 0.0 || beta_floor < 0.0 {
        return Err(Error::InvalidArgument("amplitude floors must be finite and non-negative".into()));
    }
    if alpha_floor == 0.0 || beta_floor == 0.0 {
        return Err(Error::UnboundedShots);
    }
    if alpha_floor * alpha_floor + beta_floor * beta_floor > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "floors {alpha_floor} and {beta_floor} cannot belong to a normalized state"
        )));
    }
    required_shots_for_product(alpha_floor * beta_floor, delta)
}

/// As [`required_shots`], parametrized by a floor on `|alpha*beta|`.
pub fn required_shots_for_product(product_floor: f64, delta: f64) -> Result<u64> {
    check_delta(delta)?;
    if product_floor.is_nan() || product_floor <= 0.0 {
        return Err(Error::UnboundedShots);
    }
    let ab2 = (product_floor * product_floor).min(0.25);
    let n = (1.0 - delta) * (1.0 - 4.0 * ab2) / (4.0 * delta * ab2);
    if !n.is_finite() || n >= u64::MAX as f64 {
        return Err(Error::UnboundedShots);
    }
    // Trim rounding noise so that exact integers do not round up by one.
    let n = (n * (1.0 - 4.0 * f64::EPSILON)).ceil();
    Ok((n as u64).max(1))
}

/// Outcome-1 probability after the Hadamard, `1/2 - alpha*beta`.
pub fn exact_p_s(alpha: f64, beta: f64) -> Result<f64> {
    let norm = alpha * alpha + beta * beta;
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "flag state is not normalized: alpha^2 + beta^2 = {norm}"
        )));
    }
    Ok(0.5 - alpha * beta)
}

/// A two-qubit state (sign, flag) holding `alpha|1> + beta|0>` on the flag.
pub fn flag_state(alpha: f64, beta: f64) -> Result<StateVector> {
    exact_p_s(alpha, beta)?;
    let layout = RegisterLayout::new(0, 0);
    let mut state = StateVector::init_zero(layout, DEFAULT_QUBIT_CAP)?;
    let one = state.label(&[(RegisterKind::Flag, 1)])?;
    let mut amps = state.amplitudes().to_vec();
    amps[0] = Complex64::new(beta, 0.0);
    amps[one] = Complex64::new(alpha, 0.0);
    state = StateVector::from_amplitudes(layout, amps)?;
    Ok(state)
}

/// Hadamard on the flag of a prepared copy; returns the outcome-1 probability.
fn hadamard_flag_probability(mut state: StateVector) -> Result<f64> {
    state.apply_hadamard_layer(RegisterKind::Flag);
    state.probability_of(&[(RegisterKind::Flag, 1)])
}

/// Runs the test with `shots` measurements of identically prepared copies.
///
/// `prepare` returns one (renormalized) copy; since all copies are identical
/// the shots are drawn i.i.d. from its post-Hadamard flag distribution.
pub fn run_sign_test<F, R>(prepare: F, shots: u64, rng: &mut R) -> Result<SignVerdict>
where
    F: FnOnce() -> Result<StateVector>,
    R: Rng + ?Sized,
{
    if shots == 0 {
        return Err(Error::InvalidArgument("sign test needs at least one shot".into()));
    }
    let p = hadamard_flag_probability(prepare()?)?;
    let ones = binomial(shots, p, rng)?;
    Ok(SignVerdict::from_frequency(ones as f64 / shots as f64, shots))
}

/// Exact backend: reads `P_s` from the amplitudes, `shots_used = 0`.
pub fn run_sign_test_exact<F>(prepare: F) -> Result<SignVerdict>
where
    F: FnOnce() -> Result<StateVector>,
{
    let p = hadamard_flag_probability(prepare()?)?;
    Ok(SignVerdict::from_frequency(p, 0))
}

/// Pilot run of [`PILOT_SHOTS`] to estimate `|alpha*beta|`, then a final run sized from it.
///
/// `product_floor` bounds the pilot estimate from below so the final budget stays finite.
pub fn run_sign_test_adaptive<F, R>(
    mut prepare: F,
    delta: f64,
    product_floor: f64,
    rng: &mut R,
) -> Result<SignVerdict>
where
    F: FnMut() -> Result<StateVector>,
    R: Rng + ?Sized,
{
    let pilot = run_sign_test(&mut prepare, PILOT_SHOTS, rng)?;
    let estimate = (0.5 - pilot.p_hat).abs().max(product_floor);
    let shots = required_shots_for_product(estimate, delta)?;
    let mut verdict = run_sign_test(prepare, shots, rng)?;
    verdict.shots_used += PILOT_SHOTS;
    Ok(verdict)
}
