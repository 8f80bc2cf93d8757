//! Classical Gaussian anomaly detection and the density error bound.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::QuantizedDataset;

/// Slack applied to the first-order error bound by [`check_bound_empirically`].
pub const BOUND_SLACK: f64 = 1.5;

/// Multivariate normal model with eagerly cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    mu: DVector<f64>,
    cov: DMatrix<f64>,
    factor: Option<Cholesky<f64, Dyn>>,
    log_det: Option<f64>,
}

impl GaussianModel {
    /// Builds a model; a covariance that is not positive definite yields a degenerate model.
    pub fn new(mu: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(Error::InvalidArgument("model needs at least one feature".into()));
        }
        if cov.len() != d || cov.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument(format!("covariance must be {d}x{d}")));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
        let scale = cov.amax().max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument("covariance is not symmetric".into()));
                }
            }
        }
        // Rank-deficient input can still factor through rounding; reject negligible pivots.
        let pivot_floor = 1e-12 * cov.diagonal().amax();
        let factor = cov
            .clone()
            .cholesky()
            .filter(|c| c.l_dirty().diagonal().iter().all(|p| p * p > pivot_floor));
        let log_det = factor
            .as_ref()
            .map(|c| 2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>());
        Ok(Self {
            mu: DVector::from_vec(mu),
            cov,
            factor,
            log_det,
        })
    }

    /// Same model with `lambda * I` added to the covariance.
    pub fn with_ridge(&self, lambda: f64) -> Result<Self> {
        if lambda.is_nan() || lambda < 0.0 {
            return Err(Error::InvalidArgument(format!("ridge must be non-negative, got {lambda}")));
        }
        let d = self.dim();
        let cov = (0..d)
            .map(|i| (0..d).map(|j| self.cov[(i, j)] + if i == j { lambda } else { 0.0 }).collect())
            .collect();
        Self::new(self.mu.as_slice().to_vec(), cov)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mu.as_slice()
    }

    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..d).map(|i| (0..d).map(|j| self.cov[(i, j)]).collect()).collect()
    }

    pub fn is_degenerate(&self) -> bool {
        self.factor.is_none()
    }

    /// Eigenvalues of the covariance in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = SymmetricEigen::new(self.cov.clone()).eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    fn singular_error(&self) -> Error {
        let eig = SymmetricEigen::new(self.cov.clone());
        let (idx, &eigenvalue) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty matrix");
        Error::SingularCovariance {
            eigenvalue,
            direction: eig.eigenvectors.column(idx).iter().copied().collect(),
        }
    }

    fn factor(&self) -> Result<&Cholesky<f64, Dyn>> {
        self.factor.as_ref().ok_or_else(|| self.singular_error())
    }

    /// `ln |C|`.
    pub fn log_determinant(&self) -> Result<f64> {
        self.log_det.ok_or_else(|| self.singular_error())
    }

    /// `||C^-1||_2 = 1 / lambda_min`.
    pub fn inverse_norm(&self) -> Result<f64> {
        self.factor()?;
        Ok(1.0 / self.eigenvalues()[0])
    }

    /// Effective condition number with every eigenvalue in `[D/kappa, max(D, lambda_max)]`.
    pub fn effective_kappa(&self) -> Result<f64> {
        self.factor()?;
        let ev = self.eigenvalues();
        let d = self.dim() as f64;
        Ok((d / ev[0]).max(ev[ev.len() - 1] / ev[0]))
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "point has {} features, model has {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `(x - mu)^T C^-1 (x - mu)` via a triangular solve.
    pub fn mahalanobis_squared(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let factor = self.factor()?;
        let y = DVector::from_column_slice(x) - &self.mu;
        let z = factor
            .l_dirty()
            .solve_lower_triangular(&y)
            .ok_or_else(|| self.singular_error())?;
        Ok(z.norm_squared())
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let q = self.mahalanobis_squared(x)?;
        let d = self.dim() as f64;
        Ok(-0.5 * (d * (2.0 * PI).ln() + self.log_determinant()? + q))
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        self.log_density(x).map(f64::exp)
    }

    /// Anomaly iff `density(x) < sigma`.
    pub fn detect(&self, x: &[f64], sigma: f64) -> Result<Detection> {
        if sigma.is_nan() || sigma < 0.0 {
            return Err(Error::InvalidArgument(format!("threshold must be non-negative, got {sigma}")));
        }
        let density = self.density(x)?;
        let verdict = if density < sigma {
            Verdict::Anomaly
        } else {
            Verdict::Normal
        };
        Ok(Detection { verdict, density })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Anomaly,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub verdict: Verdict,
    pub density: f64,
}

/// Exact sample mean and covariance of the decoded dataset by direct summation.
pub fn classical_moments(dataset: &QuantizedDataset) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let (m, d) = (dataset.rows(), dataset.cols());
    if m < 2 {
        return Err(Error::InvalidArgument("covariance needs at least 2 data points".into()));
    }
    let rows = dataset.decoded_rows();
    let mu: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m as f64)
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for j in 0..d {
        for k in j..d {
            let s: f64 = rows.iter().map(|r| (r[j] - mu[j]) * (r[k] - mu[k])).sum();
            cov[j][k] = s / (m - 1) as f64;
            cov[k][j] = cov[j][k];
        }
    }
    Ok((mu, cov))
}

/// Classical fit; degeneracy only surfaces when the density is evaluated.
pub fn classical_fit(dataset: &QuantizedDataset) -> Result<GaussianModel> {
    let (mu, cov) = classical_moments(dataset)?;
    GaussianModel::new(mu, cov)
}

/// Linear-interpolated `q`-quantile of `values` (`q` in `[0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("quantile of an empty set".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("quantile must lie in [0, 1], got {q}")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Error allocation parameters for the density bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub epsilon: f64,
    pub epsilon_mu: f64,
    pub epsilon_c: f64,
    pub inv_norm: f64,
    pub kappa: f64,
}

impl ErrorBudget {
    /// Budget with `epsilon_c = 3 epsilon_mu` and `epsilon` set to the resulting bound.
    pub fn from_epsilon_mu(epsilon_mu: f64, inv_norm: f64, dim: usize) -> Self {
        let kappa = inv_norm * dim as f64;
        let mut b = Self {
            epsilon: 0.0,
            epsilon_mu,
            epsilon_c: 3.0 * epsilon_mu,
            inv_norm,
            kappa,
        };
        b.epsilon = bound_value(epsilon_mu, inv_norm, dim);
        b
    }

    /// `D ||C^-1|| ||dC||` with `||dC|| <= D epsilon_c`.
    pub fn proviso(&self, dim: usize) -> f64 {
        let d = dim as f64;
        d * self.inv_norm * d * self.epsilon_c
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.epsilon_mu < 0.0 || self.inv_norm < 0.0 || self.epsilon_c < 0.0 {
            return Err(Error::InvalidArgument("error budget entries must be non-negative".into()));
        }
        if self.epsilon_c > 3.0 * self.epsilon_mu * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument("epsilon_c must not exceed 3 epsilon_mu".into()));
        }
        let value = self.proviso(dim);
        if value > 0.5 {
            return Err(Error::BoundInvalid { value });
        }
        Ok(())
    }
}

fn bound_value(epsilon_mu: f64, inv_norm: f64, dim: usize) -> f64 {
    let d2 = (dim * dim) as f64;
    7.0 * d2 * inv_norm * epsilon_mu + 12.0 * d2 * inv_norm * inv_norm * epsilon_mu
}

/// `7 D^2 ||C^-1|| eps_mu + 12 D^2 ||C^-1||^2 eps_mu`, valid while the proviso holds.
pub fn density_error_bound(budget: &ErrorBudget, dim: usize) -> Result<f64> {
    budget.validate(dim)?;
    Ok(bound_value(budget.epsilon_mu, budget.inv_norm, dim))
}

/// `eps / (7 D kappa + 12 kappa^2)`.
pub fn allocate_epsilon_mu(epsilon: f64, dim: usize, kappa: f64) -> Result<f64> {
    if !(epsilon > 0.0 && kappa > 0.0) || dim == 0 {
        return Err(Error::InvalidArgument("epsilon, kappa and D must be positive".into()));
    }
    let d = dim as f64;
    Ok(epsilon / (7.0 * d * kappa + 12.0 * kappa * kappa))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Holds,
    Violated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub status: BoundStatus,
    pub delta_p: f64,
    pub bound: f64,
    /// `BOUND_SLACK * bound - delta_p`; negative when violated.
    pub margin: f64,
}

/// Compares `|p_true(x) - p_perturbed(x)|` with the slacked bound.
pub fn check_bound_empirically(
    truth: &GaussianModel,
    perturbed: &GaussianModel,
    x: &[f64],
    budget: &ErrorBudget,
) -> Result<BoundCheck> {
    let bound = density_error_bound(budget, truth.dim())?;
    let delta_p = (truth.density(x)? - perturbed.density(x)?).abs();
    let margin = BOUND_SLACK * bound - delta_p;
    Ok(BoundCheck {
        status: if margin >= 0.0 {
            BoundStatus::Holds
        } else {
            BoundStatus::Violated
        },
        delta_p,
        bound,
        margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::quantize_dataset;

    #[test]
    fn classical_fit_example() {
        let ds = quantize_dataset(&[vec![0.5, 0.5], vec![0.25, -0.25]], 2).unwrap();
        let model = classical_fit(&ds).unwrap();
        assert_eq!(model.mean(), &[0.375, 0.125]);
        let want = [[0.03125, 0.09375], [0.09375, 0.28125]];
        let c = model.covariance();
        for j in 0..2 {
            for k in 0..2 {
                assert!((c[j][k] - want[j][k]).abs() < 1e-15);
            }
        }
        // two points always give a rank-one covariance
        assert!(model.is_degenerate());
    }

    #[test]
    fn constant_column_is_degenerate() {
        let ds = quantize_dataset(&[vec![0.5, 0.1], vec![0.5, 0.3], vec![0.5, -0.2]], 4).unwrap();
        let model = classical_fit(&ds).unwrap();
        let c = model.covariance();
        assert!(c[0].iter().all(|&v| v == 0.0));
        match model.density(&[0.5, 0.0]) {
            Err(Error::SingularCovariance { eigenvalue, direction }) => {
                assert!(eigenvalue.abs() < 1e-12);
                assert!((direction[0].abs() - 1.0).abs() < 1e-9);
            }
            other => panic!("expected singular covariance, got {other:?}"),
        }
        let ridged = model.with_ridge(1e-3).unwrap();
        assert!(ridged.density(&[0.5, 0.0]).is_ok());
    }

    #[test]
    fn centered_data_gives_gram_matrix() {
        let raw = vec![vec![0.5, 0.25], vec![-0.5, -0.25], vec![0.25, -0.5], vec![-0.25, 0.5]];
        let ds = quantize_dataset(&raw, 4).unwrap();
        let model = classical_fit(&ds).unwrap();
        assert_eq!(model.mean(), &[0.0, 0.0]);
        let c = model.covariance();
        for j in 0..2 {
            for k in 0..2 {
                let g: f64 = raw.iter().map(|r| r[j] * r[k]).sum::<f64>() / 3.0;
                assert_eq!(c[j][k], g);
            }
        }
    }

    #[test]
    fn density_examples() {
        let m = GaussianModel::new(vec![0.0], vec![vec![1.0]]).unwrap();
        assert!((m.density(&[0.0]).unwrap() - 0.3989422804).abs() < 1e-10);
        let m = GaussianModel::new(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((m.density(&[0.0, 0.0]).unwrap() - 0.1591549431).abs() < 1e-10);
        assert!(m.density(&[0.0]).is_err());
    }

    #[test]
    fn detect_examples() {
        let m = GaussianModel::new(vec![0.1, -0.2], vec![vec![0.04, 0.01], vec![0.01, 0.09]]).unwrap();
        let peak = m.density(m.mean()).unwrap();
        assert_eq!(m.detect(m.mean(), peak * 0.5).unwrap().verdict, Verdict::Normal);

        // point at Mahalanobis distance 10 along the first axis of the whitened space
        let l = m.factor().unwrap().l();
        let x: Vec<f64> = (0..2).map(|i| m.mean()[i] + 10.0 * l[(i, 0)]).collect();
        assert!((m.mahalanobis_squared(&x).unwrap() - 100.0).abs() < 1e-9);
        let sigma = peak * (-50.0f64).exp() * 1.01;
        assert_eq!(m.detect(&x, sigma).unwrap().verdict, Verdict::Anomaly);

        assert_eq!(m.detect(&x, 0.0).unwrap().verdict, Verdict::Normal);
        assert!(m.detect(&x, -1.0).is_err());
    }

    #[test]
    fn bound_examples() {
        let b = ErrorBudget { epsilon: 0.0, epsilon_mu: 0.01, epsilon_c: 0.03, inv_norm: 1.0, kappa: 2.0 };
        assert!((density_error_bound(&b, 2).unwrap() - 0.76).abs() < 1e-12);
        let zero = ErrorBudget { epsilon_mu: 0.0, epsilon_c: 0.0, ..b };
        assert_eq!(density_error_bound(&zero, 2).unwrap(), 0.0);
        let half = ErrorBudget { epsilon_mu: 0.005, epsilon_c: 0.015, ..b };
        assert!((2.0 * density_error_bound(&half, 2).unwrap() - 0.76).abs() < 1e-12);
        let bad = ErrorBudget { inv_norm: 10.0, ..b };
        assert!(matches!(density_error_bound(&bad, 2), Err(Error::BoundInvalid { .. })));
    }

    #[test]
    fn bound_is_monotone() {
        let base = ErrorBudget::from_epsilon_mu(1e-4, 2.0, 2);
        let v = density_error_bound(&base, 2).unwrap();
        assert!(density_error_bound(&ErrorBudget::from_epsilon_mu(2e-4, 2.0, 2), 2).unwrap() >= v);
        assert!(density_error_bound(&ErrorBudget::from_epsilon_mu(1e-4, 3.0, 2), 2).unwrap() >= v);
        assert!(density_error_bound(&ErrorBudget::from_epsilon_mu(1e-4, 2.0, 3), 3).unwrap() >= v);
    }

    #[test]
    fn allocation_examples() {
        assert!((allocate_epsilon_mu(0.1, 2, 4.0).unwrap() - 0.1 / 248.0).abs() < 1e-18);
        assert!((allocate_epsilon_mu(19.0, 1, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let a = allocate_epsilon_mu(0.1, 3, 2.0).unwrap();
        assert!((allocate_epsilon_mu(0.3, 3, 2.0).unwrap() - 3.0 * a).abs() < 1e-15);
        assert!(allocate_epsilon_mu(0.0, 3, 2.0).is_err());
    }

    #[test]
    fn zero_perturbation_holds() {
        let m = GaussianModel::new(vec![0.1, 0.2], vec![vec![0.5, 0.1], vec![0.1, 0.4]]).unwrap();
        let b = ErrorBudget::from_epsilon_mu(1e-4, m.inverse_norm().unwrap(), 2);
        let c = check_bound_empirically(&m, &m, &[0.3, -0.1], &b).unwrap();
        assert_eq!(c.status, BoundStatus::Holds);
        assert_eq!(c.delta_p, 0.0);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&v, 1.0).unwrap(), 4.0);
        assert_eq!(quantile(&v, 0.5).unwrap(), 2.5);
        assert!(quantile(&[], 0.5).is_err());
        assert!(quantile(&v, 1.5).is_err());
    }

    #[test]
    fn kappa_bounds_inverse_norm() {
        let m = GaussianModel::new(vec![0.0, 0.0], vec![vec![0.5, 0.1], vec![0.1, 0.4]]).unwrap();
        let kappa = m.effective_kappa().unwrap();
        assert!(m.inverse_norm().unwrap() <= kappa / 2.0 + 1e-12);
    }
}
