//! L1-penalized least squares by cyclic coordinate descent on standardized inputs.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoParams {
    /// Number of log-spaced penalties between lambda_max and lambda_max * min_ratio.
    pub grid_len: usize,
    pub min_ratio: f64,
    /// Also try the unpenalized fit.
    pub include_zero: bool,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for LassoParams {
    fn default() -> Self {
        Self { grid_len: 20, min_ratio: 1e-4, include_zero: true, max_sweeps: 10_000, tol: 1e-12 }
    }
}

impl LassoParams {
    pub fn grid(&self, lambda_max: f64) -> Vec<f64> {
        let mut g: Vec<f64> = if self.grid_len == 0 || lambda_max <= 0.0 {
            Vec::new()
        } else if self.grid_len == 1 {
            vec![lambda_max]
        } else {
            let lo = (lambda_max * self.min_ratio).ln();
            let hi = lambda_max.ln();
            (0..self.grid_len)
                .map(|i| (hi + (lo - hi) * i as f64 / (self.grid_len - 1) as f64).exp())
                .collect()
        };
        if self.include_zero || g.is_empty() {
            g.push(0.0);
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Minimizes (1/2n)||y - Xw - b||^2 + lambda ||w||_1, warm-started from `w`.
/// `x` columns are expected centered; the intercept is the mean of `y`.
pub fn coordinate_descent(x: &[Vec<f64>], y: &[f64], lambda: f64, w: &mut [f64], params: &LassoParams) -> f64 {
    let n = x.len() as f64;
    let d = w.len();
    let bias = y.iter().sum::<f64>() / n;
    let col_sq: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j] * r[j]).sum::<f64>() / n).collect();
    let mut resid: Vec<f64> =
        x.iter().zip(y).map(|(r, yi)| yi - bias - r.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>()).collect();
    for _ in 0..params.max_sweeps {
        let mut max_change = 0.0f64;
        for j in 0..d {
            if col_sq[j] == 0.0 {
                w[j] = 0.0;
                continue;
            }
            let rho: f64 = x.iter().zip(&resid).map(|(r, e)| r[j] * e).sum::<f64>() / n + col_sq[j] * w[j];
            let new = soft_threshold(rho, lambda) / col_sq[j];
            let delta = new - w[j];
            if delta != 0.0 {
                for (r, e) in x.iter().zip(resid.iter_mut()) {
                    *e -= delta * r[j];
                }
                w[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change <= params.tol {
            break;
        }
    }
    bias
}

/// Fits along the penalty path and keeps the penalty with the lowest
/// validation MSE (training MSE when no validation rows are given).
pub fn fit(
    x: &[Vec<f64>],
    y: &[f64],
    val: Option<(&[Vec<f64>], &[f64])>,
    params: &LassoParams,
) -> (LinearModel, f64, Vec<(f64, f64)>) {
    let n = x.len() as f64;
    let d = x.first().map_or(0, Vec::len);
    let ym = y.iter().sum::<f64>() / n;
    let lambda_max = (0..d)
        .map(|j| (x.iter().zip(y).map(|(r, yi)| r[j] * (yi - ym)).sum::<f64>() / n).abs())
        .fold(0.0, f64::max);
    let mut w = vec![0.0; d];
    let mut best: Option<(LinearModel, f64)> = None;
    let mut path = Vec::new();
    for lambda in params.grid(lambda_max) {
        let bias = coordinate_descent(x, y, lambda, &mut w, params);
        let model = LinearModel { weights: w.clone(), bias, lambda };
        let (vx, vy) = val.unwrap_or((x, y));
        let mse = vx.iter().zip(vy).map(|(r, t)| (model.predict(r) - t).powi(2)).sum::<f64>() / vy.len() as f64;
        path.push((lambda, mse));
        if best.as_ref().is_none_or(|(_, m)| mse < *m) {
            best = Some((model, mse));
        }
    }
    let (model, mse) = best.expect("grid is never empty");
    (model, mse, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_penalty_zeroes_weights() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 - 9.5]).collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0]).collect();
        let mut w = vec![0.0];
        coordinate_descent(&x, &y, 1e6, &mut w, &LassoParams::default());
        assert_eq!(w[0], 0.0);
    }

    #[test]
    fn grid_descends_and_ends_at_zero() {
        let g = LassoParams::default().grid(2.0);
        assert_eq!(g.len(), 21);
        assert!((g[0] - 2.0).abs() < 1e-12);
        assert!(g.windows(2).all(|p| p[0] > p[1]));
        assert_eq!(*g.last().unwrap(), 0.0);
    }
}
