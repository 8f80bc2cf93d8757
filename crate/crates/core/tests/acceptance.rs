//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use qgad_core::circuits::{amplitude_transduction, comparator_apply, Comparator};
use qgad_core::experiment::shot_scaling;
use qgad_core::gad::{check_bound_empirically, BoundStatus, ErrorBudget};
use qgad_core::rng::{stream, Phase};
use qgad_core::signtest::{flag_state, required_shots, run_sign_test, run_sign_test_exact, Sign};
use qgad_core::verify::random_dataset;
use qgad_core::{
    classical_fit, fit, quantile, quantize_dataset, EstimationBudget, GaussianModel, QuantizedDataset, RegisterKind,
    RegisterLayout, StateVector, Verdict, DEFAULT_QUBIT_CAP,
};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn basis_state(layout: RegisterLayout, values: &[(RegisterKind, usize)]) -> StateVector {
    let zero = StateVector::init_zero(layout, DEFAULT_QUBIT_CAP).unwrap();
    let mut amps = vec![Complex64::new(0.0, 0.0); zero.amplitudes().len()];
    amps[zero.label(values).unwrap()] = Complex64::new(1.0, 0.0);
    StateVector::from_amplitudes(layout, amps).unwrap()
}

fn max_deviation(a: &StateVector, b: &StateVector) -> f64 {
    a.amplitudes()
        .iter()
        .zip(b.amplitudes())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn comparator_exactness() -> Outcome {
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    for n in 1..=4usize {
        let layout = RegisterLayout::new(0, n);
        for a in 0..1usize << n {
            for b in 0..1usize << n {
                for flag in 0..2usize {
                    let start = basis_state(
                        layout,
                        &[(RegisterKind::Data, a), (RegisterKind::Reference, b), (RegisterKind::Flag, flag)],
                    );
                    let mut f = start.clone();
                    comparator_apply(&mut f, RegisterKind::Data, RegisterKind::Reference, Comparator::functional(n))
                        .map_err(|e| e.to_string())?;
                    let want_flag = flag ^ usize::from(a > b);
                    let target = f
                        .label(&[(RegisterKind::Data, a), (RegisterKind::Reference, b), (RegisterKind::Flag, want_flag)])
                        .unwrap();
                    ensure((f.amplitude(target) - Complex64::new(1.0, 0.0)).norm() < 1e-15, || {
                        format!("functional n={n} a={a} b={b} flag={flag}: wrong output")
                    })?;
                    if n <= 3 {
                        let mut g = start;
                        let gate = Comparator::gate_level(n).map_err(|e| e.to_string())?;
                        comparator_apply(&mut g, RegisterKind::Data, RegisterKind::Reference, gate)
                            .map_err(|e| e.to_string())?;
                        worst = worst.max(max_deviation(&f, &g));
                    }
                    cases += 1;
                }
            }
        }
    }
    // random superpositions over data, reference and flag (sign qubit is the carry and stays zero)
    let mut rng = stream(11, 0, Phase::Experiment);
    for n in 1..=3usize {
        let layout = RegisterLayout::new(0, n);
        let sign_bit = 1usize << layout.sign_qubit();
        for _ in 0..20 {
            let mut amps: Vec<Complex64> = (0..1usize << layout.total_qubits())
                .map(|l| {
                    if l & sign_bit != 0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                    }
                })
                .collect();
            let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            amps.iter_mut().for_each(|a| *a /= norm);
            let start = StateVector::from_amplitudes(layout, amps).map_err(|e| e.to_string())?;
            let mut f = start.clone();
            let mut g = start;
            comparator_apply(&mut f, RegisterKind::Data, RegisterKind::Reference, Comparator::functional(n))
                .map_err(|e| e.to_string())?;
            comparator_apply(&mut g, RegisterKind::Data, RegisterKind::Reference, Comparator::gate_level(n).unwrap())
                .map_err(|e| e.to_string())?;
            worst = worst.max(max_deviation(&f, &g));
        }
    }
    ensure(worst < 1e-12, || format!("gate-level deviation {worst:.3e}"))?;
    Ok(format!("{cases} basis cases, gate-level max deviation {worst:.1e}"))
}

fn transduction_identity() -> Outcome {
    let mut rng = stream(12, 0, Phase::Experiment);
    let mut worst: f64 = 0.0;
    for t in 0..20 {
        let rows = if t == 0 { 32 } else { rng.random_range(1..=32usize) };
        let bits = if t == 0 { 4 } else { rng.random_range(1..=4u32) };
        let ds = random_dataset(&mut rng, rows, 1, bits).map_err(|e| e.to_string())?;
        let layout = RegisterLayout::new(ds.index_width(), bits as usize);
        let mut state = StateVector::init_zero(layout, DEFAULT_QUBIT_CAP).map_err(|e| e.to_string())?;
        state.apply_uniform_index(rows).map_err(|e| e.to_string())?;
        let prior = state.clone();
        amplitude_transduction(&mut state, &ds, 0, Comparator::functional(bits as usize)).map_err(|e| e.to_string())?;
        let reference = layout.register(RegisterKind::Reference);
        let flag = layout.register(RegisterKind::Flag);
        let index = layout.register(RegisterKind::Index);
        let scale = (bits as f64).exp2();
        for (label, amp) in state.amplitudes().iter().enumerate() {
            if reference.extract(label) != 0 || flag.extract(label) != 1 {
                continue;
            }
            let i = index.extract(label);
            let rest_zero = label == (label & (index.mask() | flag.mask()));
            let want = if rest_zero && i < rows {
                let magnitude = ds.value(i, 0).magnitude() as f64;
                prior.amplitude(i) * magnitude / scale
            } else {
                Complex64::new(0.0, 0.0)
            };
            worst = worst.max((amp - want).norm());
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:.3e}"))?;
    Ok(format!("20 datasets, max deviation {worst:.1e}"))
}

/// Sample mean and (M-1)-normalised covariance straight from the decoded rows.
fn oracle_moments(ds: &QuantizedDataset) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let rows = ds.decoded_rows();
    let m = rows.len() as f64;
    let d = ds.cols();
    let mu: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m).collect();
    let mut cprime = vec![vec![0.0; d]; d];
    let mut cov = vec![vec![0.0; d]; d];
    for j in 0..d {
        for k in 0..d {
            cprime[j][k] = rows.iter().map(|r| r[j] * r[k]).sum::<f64>() / (m - 1.0);
            cov[j][k] = rows.iter().map(|r| (r[j] - mu[j]) * (r[k] - mu[k])).sum::<f64>() / (m - 1.0);
        }
    }
    (mu, cprime, cov)
}

fn exact_equivalence() -> Outcome {
    let mut rng = stream(13, 0, Phase::Experiment);
    let mut worst: f64 = 0.0;
    for t in 0..20 {
        let (rows, cols, bits) = if t == 0 {
            (64, 4, 6)
        } else {
            (rng.random_range(2..=64usize), rng.random_range(1..=4usize), rng.random_range(1..=6u32))
        };
        let ds = random_dataset(&mut rng, rows, cols, bits).map_err(|e| e.to_string())?;
        let report = fit(&ds, &EstimationBudget::exact()).map_err(|e| e.to_string())?;
        let (mu, cprime, cov) = oracle_moments(&ds);
        let m = rows as f64;
        for j in 0..cols {
            let e = &report.means[j];
            worst = worst.max((e.p_mu - mu[j] * mu[j]).abs());
            worst = worst.max((report.mu_hat[j] - mu[j]).abs());
            for k in 0..cols {
                worst = worst.max((report.c_prime_hat[j][k] - cprime[j][k]).abs());
                worst = worst.max((report.cov_hat[j][k] - cov[j][k]).abs());
            }
        }
        for e in &report.covariances {
            if e.degenerate.is_some() {
                // feature j identically zero: C'_jk is exactly zero
                worst = worst.max(cprime[e.j][e.k].abs());
                continue;
            }
            let identity = m * (e.p21 * e.p22).sqrt() / (m - 1.0);
            worst = worst.max((identity - cprime[e.j][e.k].abs()).abs());
        }
        ensure(worst <= 1e-10, || format!("dataset {t} (M={rows}, D={cols}, n={bits}): max delta {worst:.3e}"))?;
    }
    Ok(format!("20 datasets, max delta {worst:.1e}"))
}

fn sign_test() -> Outcome {
    let mut worst: f64 = 0.0;
    let grid: Vec<f64> = (0..=24).map(|i| -std::f64::consts::PI + i as f64 * std::f64::consts::PI / 12.0).collect();
    for &theta in &grid {
        let (alpha, beta) = (theta.sin(), theta.cos());
        let v = run_sign_test_exact(|| flag_state(alpha, beta)).map_err(|e| e.to_string())?;
        worst = worst.max((v.p_hat - (0.5 - alpha * beta)).abs());
        ensure(v.shots_used == 0, || "exact sign test consumed shots".into())?;
    }
    ensure(worst <= 1e-12, || format!("exact P_s deviation {worst:.3e}"))?;

    let delta = 0.1;
    let trials = 500u64;
    let limit = delta + 2.0 * (0.09f64 / trials as f64).sqrt();
    let mut max_rate: f64 = 0.0;
    let mut points = 0;
    for (idx, &theta) in grid.iter().enumerate() {
        let (alpha, beta) = (theta.sin(), theta.cos());
        if (alpha * beta).abs() < 0.05 {
            continue;
        }
        points += 1;
        let shots = required_shots(alpha.abs(), beta.abs(), delta).map_err(|e| e.to_string())?;
        let truth = Sign::of(alpha * beta);
        let mut wrong = 0u64;
        for t in 0..trials {
            let mut rng = stream(14, (idx as u64) << 20 | t, Phase::SignTest);
            let v = run_sign_test(|| flag_state(alpha, beta), shots, &mut rng).map_err(|e| e.to_string())?;
            wrong += u64::from(v.sign != truth);
        }
        let rate = wrong as f64 / trials as f64;
        max_rate = max_rate.max(rate);
        ensure(rate <= limit, || {
            format!("alpha={alpha:.3} beta={beta:.3}: wrong-sign rate {rate:.3} > {limit:.4}")
        })?;
    }
    Ok(format!(
        "exact P_s deviation {worst:.1e}; {points} grid points, max wrong-sign rate {max_rate:.3} (limit {limit:.4})"
    ))
}

fn shot_noise_scaling() -> Outcome {
    let mut rng = stream(15, 0, Phase::Experiment);
    let raw: Vec<Vec<f64>> = (0..32)
        .map(|_| vec![rng.random_range(0.2..0.9), rng.random_range(-0.8..-0.1)])
        .collect();
    let ds = quantize_dataset(&raw, 4).map_err(|e| e.to_string())?;
    let grid = [100, 1_000, 10_000, 100_000, 1_000_000];
    let table = shot_scaling(&ds, &grid, 50, &EstimationBudget::shots(1, 15)).map_err(|e| e.to_string())?;
    let mut slopes = Vec::new();
    for (j, s) in table.slopes.iter().enumerate() {
        let s = s.ok_or_else(|| format!("feature {j}: no slope"))?;
        ensure((s + 0.5).abs() <= 0.1, || format!("feature {j}: slope {s:.4}"))?;
        slopes.push(format!("{s:.3}"));
    }
    let pooled = table.pooled_slope.ok_or("no pooled slope")?;
    ensure((pooled + 0.5).abs() <= 0.1, || format!("pooled slope {pooled:.4}"))?;
    Ok(format!("slopes [{}], pooled {pooled:.3}", slopes.join(", ")))
}

fn bound_oracle(dim: usize, inv_norm: f64, epsilon_mu: f64) -> f64 {
    let d2 = (dim * dim) as f64;
    7.0 * d2 * inv_norm * epsilon_mu + 12.0 * d2 * inv_norm * inv_norm * epsilon_mu
}

fn error_bound() -> Outcome {
    let models: [(Vec<f64>, Vec<Vec<f64>>); 2] = [
        (vec![0.1, -0.2], vec![vec![0.05, 0.01], vec![0.01, 0.04]]),
        (
            vec![0.0, 0.3, -0.1],
            vec![vec![0.06, 0.01, 0.0], vec![0.01, 0.05, -0.01], vec![0.0, -0.01, 0.04]],
        ),
    ];
    let mut rng = stream(16, 0, Phase::Experiment);
    let mut report = Vec::new();
    for (mu, cov) in models {
        let d = mu.len();
        let truth = GaussianModel::new(mu.clone(), cov.clone()).map_err(|e| e.to_string())?;
        let inv_norm = truth.inverse_norm().map_err(|e| e.to_string())?;
        // largest epsilon_mu keeping the proviso at 1/2
        let epsilon_mu = 0.5 / ((d * d) as f64 * inv_norm * 3.0);
        let budget = ErrorBudget::from_epsilon_mu(epsilon_mu, inv_norm, d);
        let proviso = (d * d) as f64 * inv_norm * budget.epsilon_c;
        ensure(proviso <= 0.5 + 1e-12, || format!("D={d}: proviso {proviso}"))?;
        let bound = bound_oracle(d, inv_norm, epsilon_mu);
        let mut max_ratio: f64 = 0.0;
        for _ in 0..1000 {
            let mu_p: Vec<f64> = mu.iter().map(|m| m + rng.random_range(-epsilon_mu..=epsilon_mu)).collect();
            let mut cov_p = cov.clone();
            for j in 0..d {
                for k in j..d {
                    let e = rng.random_range(-budget.epsilon_c..=budget.epsilon_c);
                    cov_p[j][k] += e;
                    if j != k {
                        cov_p[k][j] += e;
                    }
                }
            }
            let perturbed = GaussianModel::new(mu_p, cov_p).map_err(|e| e.to_string())?;
            let x: Vec<f64> = mu.iter().map(|m| m + rng.random_range(-0.5..0.5)).collect();
            let check = check_bound_empirically(&truth, &perturbed, &x, &budget).map_err(|e| e.to_string())?;
            ensure((check.bound - bound).abs() <= 1e-12 * bound, || "bound formula mismatch".into())?;
            let tdp = (truth.density(&x).unwrap() - perturbed.density(&x).unwrap()).abs();
            ensure(tdp <= 1.5 * bound && check.status == BoundStatus::Holds, || {
                format!("D={d}: |dp|={tdp:.3e} exceeds 1.5 x {bound:.3e}")
            })?;
            max_ratio = max_ratio.max(tdp / bound);
        }
        report.push(format!("D={d} max |dp|/bound {max_ratio:.2e}"));
    }
    Ok(report.join("; "))
}

fn cofactor_det(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    if n == 1 {
        return a[0][0];
    }
    (0..n)
        .map(|c| {
            let minor = minor(a, 0, c);
            let s = if c % 2 == 0 { 1.0 } else { -1.0 };
            s * a[0][c] * cofactor_det(&minor)
        })
        .sum()
}

fn minor(a: &[Vec<f64>], row: usize, col: usize) -> Vec<Vec<f64>> {
    a.iter()
        .enumerate()
        .filter(|(r, _)| *r != row)
        .map(|(_, r)| r.iter().enumerate().filter(|(c, _)| *c != col).map(|(_, v)| *v).collect())
        .collect()
}

fn cofactor_density(mu: &[f64], cov: &[Vec<f64>], x: &[f64]) -> f64 {
    let n = mu.len();
    let det = cofactor_det(cov);
    let inv: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let c = if n == 1 { 1.0 } else { cofactor_det(&minor(cov, j, i)) };
                    let s = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    s * c / det
                })
                .collect()
        })
        .collect();
    let d: Vec<f64> = x.iter().zip(mu).map(|(a, b)| a - b).collect();
    let q: f64 = (0..n).map(|i| (0..n).map(|j| d[i] * inv[i][j] * d[j]).sum::<f64>()).sum();
    (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(n as i32) * det).sqrt()
}

fn density_correctness() -> Outcome {
    let mut rng = stream(17, 0, Phase::Experiment);
    let mut worst: f64 = 0.0;
    for d in 1..=4usize {
        for _ in 0..50 {
            // A A^T + 0.1 I is safely positive definite
            let a: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
            let cov: Vec<Vec<f64>> = (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| (0..d).map(|k| a[i][k] * a[j][k]).sum::<f64>() + if i == j { 0.1 } else { 0.0 })
                        .collect()
                })
                .collect();
            let mu: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
            let model = GaussianModel::new(mu.clone(), cov.clone()).map_err(|e| e.to_string())?;
            for _ in 0..5 {
                let x: Vec<f64> = mu.iter().map(|m| m + rng.random_range(-1.0..1.0)).collect();
                let want = cofactor_density(&mu, &cov, &x);
                let got = model.density(&x).map_err(|e| e.to_string())?;
                worst = worst.max((got - want).abs() / want);
            }
        }
    }
    ensure(worst <= 1e-9, || format!("relative deviation {worst:.3e}"))?;

    // composite Simpson over mu +- 12 sigma
    let (mu, var) = (0.2, 0.09);
    let model = GaussianModel::new(vec![mu], vec![vec![var]]).map_err(|e| e.to_string())?;
    let sd: f64 = var.sqrt();
    let (lo, hi, n) = (mu - 12.0 * sd, mu + 12.0 * sd, 4000usize);
    let h = (hi - lo) / n as f64;
    let mut sum = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * model.density(&[lo + i as f64 * h]).map_err(|e| e.to_string())?;
    }
    let integral = sum * h / 3.0;
    ensure((integral - 1.0).abs() <= 1e-6, || format!("D=1 integral {integral}"))?;
    Ok(format!("max relative deviation {worst:.1e}, D=1 integral - 1 = {:.1e}", integral - 1.0))
}

fn detection_agreement() -> Outcome {
    let mut rng = stream(18, 0, Phase::Experiment);
    // generating covariance and its Cholesky factor
    let cov: [[f64; 2]; 2] = [[0.0064, 0.003], [0.003, 0.01]];
    let l11 = cov[0][0].sqrt();
    let l21 = cov[0][1] / l11;
    let l22 = (cov[1][1] - l21 * l21).sqrt();
    let mahalanobis = |x: &[f64]| {
        let z0 = x[0] / l11;
        let z1 = (x[1] - l21 * z0) / l22;
        (z0 * z0 + z1 * z1).sqrt()
    };
    let mut raw = Vec::new();
    while raw.len() < 59 {
        let z0: f64 = StandardNormal.sample(&mut rng);
        let z1: f64 = StandardNormal.sample(&mut rng);
        let x = vec![l11 * z0, l21 * z0 + l22 * z1];
        if mahalanobis(&x) < 3.5 {
            raw.push(x);
        }
    }
    for i in 0..5 {
        let angle = 2.0 * std::f64::consts::PI * (i as f64 + 0.3) / 5.0;
        let (z0, z1) = (7.0 * angle.cos(), 7.0 * angle.sin());
        raw.push(vec![l11 * z0, l21 * z0 + l22 * z1]);
    }
    let ds = quantize_dataset(&raw, 6).map_err(|e| e.to_string())?;
    let rows = ds.decoded_rows();
    for x in &rows[59..] {
        let dm = mahalanobis(x);
        ensure(dm >= 6.0, || format!("planted outlier only at distance {dm:.2}"))?;
    }

    let classical = classical_fit(&ds).map_err(|e| e.to_string())?;
    let report = fit(&ds, &EstimationBudget::exact()).map_err(|e| e.to_string())?;
    let quantum = GaussianModel::new(report.mu_hat.clone(), report.cov_hat.clone()).map_err(|e| e.to_string())?;
    let densities: Vec<f64> = rows.iter().map(|x| classical.density(x).unwrap()).collect();
    let sigma = quantile(&densities, 0.1).map_err(|e| e.to_string())?;
    let mut compared = 0;
    let mut flagged_outliers = 0;
    for (i, x) in rows.iter().enumerate() {
        let c = classical.detect(x, sigma).map_err(|e| e.to_string())?;
        if i >= 59 && c.verdict == Verdict::Anomaly {
            flagged_outliers += 1;
        }
        if (c.density - sigma).abs() < 0.1 * sigma {
            continue;
        }
        let q = quantum.detect(x, sigma).map_err(|e| e.to_string())?;
        ensure(q.verdict == c.verdict, || format!("row {i}: verdicts differ"))?;
        compared += 1;
    }
    ensure(compared >= 32, || format!("only {compared} rows outside the threshold band"))?;
    Ok(format!("{compared}/64 rows compared, all agree; {flagged_outliers}/5 planted outliers flagged"))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "comparator exactness", limit: Duration::from_secs(10), run: comparator_exactness },
        Criterion { id: 2, name: "transduction identity", limit: Duration::from_secs(30), run: transduction_identity },
        Criterion { id: 3, name: "exact pipeline equals classical", limit: Duration::from_secs(300), run: exact_equivalence },
        Criterion { id: 4, name: "hadamard sign test", limit: Duration::from_secs(120), run: sign_test },
        Criterion { id: 5, name: "shot-noise scaling", limit: Duration::from_secs(900), run: shot_noise_scaling },
        Criterion { id: 6, name: "error-propagation bound", limit: Duration::from_secs(60), run: error_bound },
        Criterion { id: 7, name: "density correctness", limit: Duration::from_secs(30), run: density_correctness },
        Criterion { id: 8, name: "end-to-end detection", limit: Duration::from_secs(60), run: detection_agreement },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.limit => Err(format!("{detail}; runtime {elapsed:.1?} over {:?}", c.limit)),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS [{}] {} ({elapsed:.2?}): {detail}", c.id, c.name),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {} ({elapsed:.2?}): {detail}", c.id, c.name);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
