//! Per-gene noise variance estimation and empirical-Bayes shrinkage.
//!
//! Raw variances come from an alternating scheme: given the current variances,
//! compute unpenalized per-gene coefficients against the double-centered data;
//! given the coefficients, update each variance as the mean squared residual
//! (MLE 1/n denominator); then refresh the precision-weighted coefficient
//! mean. Raw estimates are then pulled toward the across-gene mean variance
//! with a data-driven weight.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io_units::ExpressionMatrix;
use crate::preprocess::DesignMatrix;

/// Stopping parameters for the alternating variance estimation.
#[derive(Debug, Clone)]
pub struct VarianceConfig {
    /// Maximum relative change in any sigma_i^2 at which to stop.
    pub tol: f64,
    pub max_iter: usize,
    /// Lower bound applied to every variance; keeps precision weights finite
    /// on noise-free data.
    pub variance_floor: f64,
}

impl Default for VarianceConfig {
    fn default() -> Self {
        VarianceConfig {
            tol: 1e-6,
            max_iter: 200,
            variance_floor: 1e-8,
        }
    }
}

/// Raw and shrunken per-gene noise variances.
#[derive(Debug, Clone)]
pub struct VarianceEstimates {
    /// Per-gene MLE variances, floored at the configured minimum.
    pub raw: Vec<f64>,
    /// Empirical-Bayes estimates, a convex combination of raw and mean.
    pub shrunken: Vec<f64>,
    /// Shrinkage weight, clamped to [0, 1].
    pub weight: f64,
    /// Across-gene mean of the raw variances.
    pub mean_variance: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl VarianceEstimates {
    /// Builds estimates from known variances, e.g. when the noise level is
    /// fixed externally. Shrunken equals raw.
    pub fn from_known(sigma2: Vec<f64>) -> Result<Self> {
        if sigma2.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput("variances must be positive".into()));
        }
        let mean = sigma2.iter().sum::<f64>() / sigma2.len() as f64;
        Ok(VarianceEstimates {
            raw: sigma2.clone(),
            shrunken: sigma2,
            weight: 0.0,
            mean_variance: mean,
            iterations: 0,
            converged: true,
        })
    }

    /// Precision weights 1/sigma_i'^2 from the shrunken variances.
    pub fn precision_weights(&self) -> Vec<f64> {
        self.shrunken.iter().map(|s| 1.0 / s).collect()
    }
}

/// Estimates raw per-gene variances by the alternating scheme.
///
/// Starts from common unit variances and a zero coefficient mean; each sweep
/// updates coefficients, then variances, then the weighted coefficient mean.
/// Returned estimates carry `shrunken == raw`; apply [`shrink_variances`] for
/// the empirical-Bayes step.
pub fn estimate_variances(
    y: &ExpressionMatrix,
    x: &DesignMatrix,
    cfg: &VarianceConfig,
) -> Result<VarianceEstimates> {
    estimate_variances_from(y, x, cfg, None)
}

/// Same alternation, warm-started from given variances when provided.
fn estimate_variances_from(
    y: &ExpressionMatrix,
    x: &DesignMatrix,
    cfg: &VarianceConfig,
    initial_sigma2: Option<Vec<f64>>,
) -> Result<VarianceEstimates> {
    let (m, n) = y.values.dim();
    let p = x.n_covariates();
    if x.n_samples() != n {
        return Err(Error::InvalidInput(format!(
            "design has {} samples, expression matrix has {n}",
            x.n_samples()
        )));
    }
    if n <= p + 1 {
        return Err(Error::InsufficientReplication(format!(
            "need n >= p + 2 samples (n = {n}, p = {p})"
        )));
    }
    if m < 2 {
        return Err(Error::InvalidInput("need at least 2 genes".into()));
    }

    // Gene-independent pieces.
    let xv = &x.values;
    let row_means: Vec<f64> = (0..m)
        .map(|i| y.values.row(i).iter().sum::<f64>() / n as f64)
        .collect();
    // t_i = X' y_i per gene (m×p).
    let t: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (0..p)
                .map(|c| (0..n).map(|j| xv[[j, c]] * y.values[[i, j]]).sum())
                .collect()
        })
        .collect();
    let xtx = {
        let mut g = DMatrix::<f64>::zeros(p, p);
        for a in 0..p {
            for b in 0..p {
                g[(a, b)] = (0..n).map(|j| xv[[j, a]] * xv[[j, b]]).sum::<f64>();
            }
        }
        g
    };
    let xtx_inv = xtx
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateDesign("X'X is singular".into()))?;

    let mut sigma2 = initial_sigma2.unwrap_or_else(|| vec![1.0_f64; m]);
    if sigma2.len() != m {
        return Err(Error::InvalidInput("initial variance length mismatch".into()));
    }
    let mut beta_bar = vec![0.0_f64; p];
    let mut beta = vec![vec![0.0_f64; p]; m];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter {
        iterations += 1;
        let weights: Vec<f64> = sigma2.iter().map(|s| 1.0 / s).collect();
        let weight_sum: f64 = weights.iter().sum();

        // Weighted mean of t_i over genes, fixed order.
        let mut t_bar = vec![0.0_f64; p];
        for i in 0..m {
            for c in 0..p {
                t_bar[c] += weights[i] * t[i][c];
            }
        }
        for c in 0..p {
            t_bar[c] /= weight_sum;
        }

        // Coefficient update: beta_i = (X'X)^-1 (t_i - t_bar) + beta_bar.
        beta = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut out = vec![0.0_f64; p];
                for a in 0..p {
                    let mut acc = 0.0;
                    for b in 0..p {
                        acc += xtx_inv[(a, b)] * (t[i][b] - t_bar[b]);
                    }
                    out[a] = acc + beta_bar[a];
                }
                out
            })
            .collect();

        // Weighted column means and grand mean with the current weights.
        let wcol: Vec<f64> = (0..n)
            .map(|j| {
                let mut acc = 0.0;
                for i in 0..m {
                    acc += weights[i] * y.values[[i, j]];
                }
                acc / weight_sum
            })
            .collect();
        let grand = {
            let mut acc = 0.0;
            for i in 0..m {
                acc += weights[i] * row_means[i];
            }
            acc / weight_sum
        };

        // Variance update: mean squared residual of the centered fit.
        let beta_bar_now = beta_bar.clone();
        let sigma2_new: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                for j in 0..n {
                    let mut fit = 0.0;
                    for c in 0..p {
                        fit += xv[[j, c]] * (beta[i][c] - beta_bar_now[c]);
                    }
                    let r = y.values[[i, j]] - row_means[i] - wcol[j] + grand - fit;
                    acc += r * r;
                }
                (acc / n as f64).max(cfg.variance_floor)
            })
            .collect();

        let max_rel_change = sigma2
            .iter()
            .zip(&sigma2_new)
            .map(|(old, new)| (new - old).abs() / old)
            .fold(0.0_f64, f64::max);
        sigma2 = sigma2_new;

        // Refresh the weighted coefficient mean with the updated variances.
        let weights_new: Vec<f64> = sigma2.iter().map(|s| 1.0 / s).collect();
        let weight_sum_new: f64 = weights_new.iter().sum();
        beta_bar = vec![0.0_f64; p];
        for i in 0..m {
            for c in 0..p {
                beta_bar[c] += weights_new[i] * beta[i][c];
            }
        }
        for c in 0..p {
            beta_bar[c] /= weight_sum_new;
        }

        if max_rel_change < cfg.tol {
            converged = true;
            break;
        }
    }
    let _ = beta;

    let mean = sigma2.iter().sum::<f64>() / m as f64;
    Ok(VarianceEstimates {
        raw: sigma2.clone(),
        shrunken: sigma2,
        weight: 0.0,
        mean_variance: mean,
        iterations,
        converged,
    })
}

/// Applies each raw variance the convex combination with the mean variance.
pub(crate) fn shrink_with_weight(raw: &[f64], weight: f64, mean: f64) -> Vec<f64> {
    raw.iter().map(|s| (1.0 - weight) * s + weight * mean).collect()
}

/// Empirical-Bayes shrinkage of raw variances toward their mean.
///
/// The weight is
///   w = 2(m-1)/(n+1) * (1/m + mean^2 / sum_i (raw_i - mean)^2)
/// clamped to [0, 1]; equal raw variances (zero dispersion) use w = 1.
pub fn shrink_variances(raw: &[f64], n: usize) -> Result<VarianceEstimates> {
    let m = raw.len();
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 genes to shrink variances, got {m}"
        )));
    }
    if raw.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidInput("raw variances must be positive".into()));
    }
    let mean = raw.iter().sum::<f64>() / m as f64;
    let ss: f64 = raw.iter().map(|s| (s - mean) * (s - mean)).sum();
    let weight = if ss == 0.0 {
        1.0
    } else {
        let w = 2.0 * (m as f64 - 1.0) / (n as f64 + 1.0) * (1.0 / m as f64 + mean * mean / ss);
        w.clamp(0.0, 1.0)
    };
    Ok(VarianceEstimates {
        raw: raw.to_vec(),
        shrunken: shrink_with_weight(raw, weight, mean),
        weight,
        mean_variance: mean,
        iterations: 0,
        converged: true,
    })
}

/// Runs [`estimate_variances`] followed by [`shrink_variances`].
pub fn estimate_shrunken(
    y: &ExpressionMatrix,
    x: &DesignMatrix,
    cfg: &VarianceConfig,
) -> Result<VarianceEstimates> {
    let raw = estimate_variances(y, x, cfg)?;
    let mut full = shrink_variances(&raw.raw, y.n_samples())?;
    full.iterations = raw.iterations;
    full.converged = raw.converged;
    Ok(full)
}
