//! Self-verification suites: comparator tables, transduction identity,
//! sign-test failure rate and exact-backend equivalence with the classical fit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuits::{amplitude_transduction, comparator_apply, Comparator, GATE_LEVEL_MAX_WIDTH};
use crate::error::Result;
use crate::estimators::{fit, EstimationBudget};
use crate::fixedpoint::{FixedPointValue, QuantizedDataset};
use crate::gad::classical_moments;
use crate::rng::{stream, Phase};
use crate::signtest::{flag_state, required_shots, run_sign_test, Sign};
use crate::statevector::{RegisterKind, RegisterLayout, StateVector, DEFAULT_QUBIT_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Comparator,
    Transduction,
    Signtest,
    Equivalence,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Comparator, Suite::Transduction, Suite::Signtest, Suite::Equivalence];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Random dataset with uniformly drawn magnitudes and signs.
pub fn random_dataset<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, bits: u32) -> Result<QuantizedDataset> {
    let values = (0..rows * cols)
        .map(|_| FixedPointValue::new(rng.random(), rng.random_range(0..1u32 << bits), bits))
        .collect::<Result<Vec<_>>>()?;
    QuantizedDataset::from_values(values, rows, cols)
}

pub fn run(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Comparator => comparator_checks()?,
        Suite::Transduction => transduction_checks(seed)?,
        Suite::Signtest => signtest_checks(seed)?,
        Suite::Equivalence => equivalence_checks(seed)?,
    };
    Ok(SuiteReport { suite, checks })
}

fn comparator_checks() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for n in 1..=4usize {
        let layout = RegisterLayout::new(0, n);
        let mut cases = 0;
        let mut failures = 0;
        let mut gate_failures = 0;
        for a in 0..1usize << n {
            for b in 0..1usize << n {
                let base = StateVector::init_zero(layout, DEFAULT_QUBIT_CAP)?;
                let label = base.label(&[(RegisterKind::Data, a), (RegisterKind::Reference, b)])?;
                let mut amps = vec![num_complex::Complex64::new(0.0, 0.0); base.amplitudes().len()];
                amps[label] = num_complex::Complex64::new(1.0, 0.0);
                let start = StateVector::from_amplitudes(layout, amps)?;
                let mut f = start.clone();
                comparator_apply(&mut f, RegisterKind::Data, RegisterKind::Reference, Comparator::functional(n))?;
                let flipped = f.probability_of(&[
                    (RegisterKind::Data, a),
                    (RegisterKind::Reference, b),
                    (RegisterKind::Flag, 1),
                ])? > 0.5;
                cases += 1;
                if flipped != (a > b) {
                    failures += 1;
                }
                if n <= GATE_LEVEL_MAX_WIDTH {
                    let mut g = start;
                    comparator_apply(&mut g, RegisterKind::Data, RegisterKind::Reference, Comparator::gate_level(n)?)?;
                    let dev = f
                        .amplitudes()
                        .iter()
                        .zip(g.amplitudes())
                        .map(|(x, y)| (x - y).norm())
                        .fold(0.0, f64::max);
                    if dev >= 1e-12 {
                        gate_failures += 1;
                    }
                }
            }
        }
        checks.push(Check {
            name: format!("functional n={n}"),
            passed: failures == 0,
            detail: format!("{cases} cases, {failures} mismatches"),
        });
        if n <= GATE_LEVEL_MAX_WIDTH {
            checks.push(Check {
                name: format!("gate-level n={n}"),
                passed: gate_failures == 0,
                detail: format!("{cases} cases, {gate_failures} deviations"),
            });
        }
    }
    Ok(checks)
}

fn transduction_checks(seed: u64) -> Result<Vec<Check>> {
    let mut rng = stream(seed, 0, Phase::Experiment);
    let mut checks = Vec::new();
    for t in 0..20 {
        let rows = rng.random_range(1..=32usize);
        let bits = rng.random_range(1..=4u32);
        let ds = random_dataset(&mut rng, rows, 1, bits)?;
        let layout = RegisterLayout::new(ds.index_width(), bits as usize);
        let mut state = StateVector::init_zero(layout, DEFAULT_QUBIT_CAP)?;
        state.apply_uniform_index(rows)?;
        let prior = state.clone();
        amplitude_transduction(&mut state, &ds, 0, Comparator::functional(bits as usize))?;
        let mut worst: f64 = 0.0;
        for i in 0..rows {
            let want = prior.amplitude(i) * ds.value(i, 0).abs();
            let got = state.amplitude(state.label(&[(RegisterKind::Index, i), (RegisterKind::Flag, 1)])?);
            worst = worst.max((got - want).norm());
        }
        let mass = state.probability_of(&[])?;
        checks.push(Check {
            name: format!("dataset {t} (M={rows}, n={bits})"),
            passed: worst < 1e-12 && (mass - 1.0).abs() < 1e-12,
            detail: format!("max amplitude deviation {worst:.3e}"),
        });
    }
    Ok(checks)
}

fn signtest_checks(seed: u64) -> Result<Vec<Check>> {
    let delta = 0.1;
    let runs = 500u64;
    let limit = delta + 2.0 * (delta * (1.0 - delta) / runs as f64).sqrt();
    let mut checks = Vec::new();
    for (idx, &theta) in [0.1f64, 0.3, 0.6, 1.0, 1.4].iter().enumerate() {
        for negative in [false, true] {
            let (a, b) = (theta.sin(), theta.cos());
            let alpha = if negative { -a } else { a };
            if (alpha * b).abs() < 0.05 {
                continue;
            }
            let shots = required_shots(a, b, delta)?;
            let mut wrong = 0u64;
            for t in 0..runs {
                let mut rng = stream(seed, (idx as u64) << 32 | t << 1 | negative as u64, Phase::SignTest);
                let v = run_sign_test(|| flag_state(alpha, b), shots, &mut rng)?;
                if v.sign != Sign::of(alpha * b) {
                    wrong += 1;
                }
            }
            let rate = wrong as f64 / runs as f64;
            checks.push(Check {
                name: format!("alpha={alpha:.3} beta={b:.3}"),
                passed: rate <= limit,
                detail: format!("{shots} shots, wrong-sign rate {rate:.3} (limit {limit:.3})"),
            });
        }
    }
    Ok(checks)
}

fn equivalence_checks(seed: u64) -> Result<Vec<Check>> {
    let mut rng = stream(seed, 1, Phase::Experiment);
    let mut checks = Vec::new();
    for t in 0..20 {
        let rows = rng.random_range(2..=32usize);
        let cols = rng.random_range(1..=3usize);
        let bits = rng.random_range(1..=4u32);
        let ds = random_dataset(&mut rng, rows, cols, bits)?;
        let report = fit(&ds, &EstimationBudget::exact())?;
        let (mu, cov) = classical_moments(&ds)?;
        let mut worst: f64 = 0.0;
        for j in 0..cols {
            worst = worst.max((report.mu_hat[j] - mu[j]).abs());
            for k in 0..cols {
                worst = worst.max((report.cov_hat[j][k] - cov[j][k]).abs());
            }
        }
        checks.push(Check {
            name: format!("dataset {t} (M={rows}, D={cols}, n={bits})"),
            passed: worst <= 1e-10,
            detail: format!("max delta {worst:.3e}"),
        });
    }
    Ok(checks)
}
