//! Shot-noise scaling experiment for the mean-magnitude estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate_mean_magnitude, Backend, EstimationBudget};
use crate::fixedpoint::QuantizedDataset;
use crate::gad::classical_moments;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub shots: u64,
    pub feature: usize,
    /// Root-mean-square error of `|mu_hat_j|` over the repeats.
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    /// Fitted log-log slope per feature (`None` when fewer than two nonzero RMSE points).
    pub slopes: Vec<Option<f64>>,
    /// Slope fitted on the pooled points of all features.
    pub pooled_slope: Option<f64>,
}

impl ScalingTable {
    /// Comma-separated table with a one-line header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("shots,feature,rmse,slope\n");
        for r in &self.rows {
            let slope = self.slopes[r.feature].map_or(String::new(), |s| s.to_string());
            out.push_str(&format!("{},{},{},{}\n", r.shots, r.feature, r.rmse, slope));
        }
        out
    }
}

/// Ordinary least squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

fn log_log_slope(points: &[(u64, f64)]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|(_, r)| *r > 0.0)
        .map(|&(s, r)| ((s as f64).ln(), r.ln()))
        .unzip();
    ols_slope(&xs, &ys)
}

/// RMSE of `|mu_hat_j|` against the exact `|mu_j|` for each shot count, over `repeats` seeds.
///
/// Requires at least three shot counts spanning two decades and at least 20 repeats.
pub fn shot_scaling(
    dataset: &QuantizedDataset,
    shots_grid: &[u64],
    repeats: u64,
    base: &EstimationBudget,
) -> Result<ScalingTable> {
    let mut grid = shots_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.len() < 3 || grid[0] == 0 || grid[grid.len() - 1] < 100 * grid[0] {
        return Err(Error::InvalidArgument(
            "shot grid needs at least 3 positive points spanning at least two decades".into(),
        ));
    }
    if repeats < 20 {
        return Err(Error::InvalidArgument(format!("need at least 20 repeats, got {repeats}")));
    }
    let (mu, _) = classical_moments(dataset)?;
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    let mut pooled = Vec::new();
    for (j, mu_j) in mu.iter().enumerate() {
        let truth = mu_j.abs();
        let mut points = Vec::new();
        for &shots in &grid {
            let mut sq = 0.0;
            for r in 0..repeats {
                let budget = EstimationBudget {
                    backend: Backend::Shots,
                    shots_magnitude: shots,
                    seed: base.seed.wrapping_add(r.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
                    ..*base
                };
                let est = estimate_mean_magnitude(dataset, j, &budget)?;
                sq += (est.magnitude - truth).powi(2);
            }
            let rmse = (sq / repeats as f64).sqrt();
            rows.push(ScalingRow { shots, feature: j, rmse });
            points.push((shots, rmse));
        }
        slopes.push(log_log_slope(&points));
        pooled.extend(points);
    }
    Ok(ScalingTable {
        rows,
        slopes,
        pooled_slope: log_log_slope(&pooled),
    })
}
