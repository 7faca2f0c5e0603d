//! Single-covariate L1 fit by consensus ADMM.
//!
//! After double centering, the objective in the per-gene slopes beta_i is
//!
//!   sum_i w_i/2 * sum_j (ytilde_ij - x_j (beta_i - betabar))^2 + alpha * sum_i |beta_i|
//!
//! with betabar the precision-weighted mean of the slopes. The ADMM splits
//! betabar off as a consensus scalar delta0. Each beta_i update is a scaled
//! soft-threshold; the update sweep uses previous-iterate values for the
//! other genes (Jacobi style), so genes can be updated in parallel with a
//! deterministic sequential reduction for the weighted mean.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io_units::ExpressionMatrix;
use crate::preprocess::{center_expression, CenteredExpression, DesignMatrix};
use crate::variance::VarianceEstimates;

use super::{assemble_result, soft_threshold, FitResult, Penalty, SolverConfig};

/// Smallest penalty at which every fitted slope is exactly zero:
/// max_i w_i |x' ytilde_i|.
pub fn alpha_max_simple(centered: &CenteredExpression, design: &DesignMatrix) -> Result<f64> {
    if design.n_covariates() != 1 {
        return Err(Error::InvalidInput(format!(
            "simple model requires exactly one covariate, got {}",
            design.n_covariates()
        )));
    }
    let (m, n) = centered.values.dim();
    let mut best = 0.0_f64;
    for i in 0..m {
        let mut t = 0.0;
        for j in 0..n {
            t += design.values[[j, 0]] * centered.values[[i, j]];
        }
        best = best.max(centered.weights[i] * t.abs());
    }
    Ok(best)
}

/// Fits the single-covariate model.
///
/// The design must be standardized and the variances positive; weights are
/// 1/sigma_i'^2 from the shrunken variances. Non-convergence within
/// `max_iter` is reported through the `converged` flag, not an error.
pub fn fit_simple(
    y: &ExpressionMatrix,
    design: &DesignMatrix,
    variances: &VarianceEstimates,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    if design.n_covariates() != 1 {
        return Err(Error::InvalidInput(format!(
            "simple model requires exactly one covariate, got {}",
            design.n_covariates()
        )));
    }
    let (m, n) = y.values.dim();
    if design.n_samples() != n {
        return Err(Error::InvalidInput(format!(
            "design has {} samples, expression matrix has {n}",
            design.n_samples()
        )));
    }
    if variances.shrunken.len() != m {
        return Err(Error::InvalidInput("variance length mismatch".into()));
    }

    let weights = variances.precision_weights();
    if weights.iter().any(|w| !w.is_finite() || !(*w > 0.0)) {
        return Err(Error::InvalidInput("variances must be positive and finite".into()));
    }
    let centered = center_expression(y, &weights)?;

    // Per-gene data correlations t_i = x' ytilde_i.
    let t: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                acc += design.values[[j, 0]] * centered.values[[i, j]];
            }
            acc
        })
        .collect();

    let alpha_max = {
        let mut best = 0.0_f64;
        for i in 0..m {
            best = best.max(weights[i] * t[i].abs());
        }
        best
    };
    let alpha = cfg.resolve_alpha(alpha_max);

    let weight_sum: f64 = weights.iter().sum();
    let rho = cfg.rho;
    // Per-gene constants of the thresholded update: the shrink prefactor
    // S^2 / (S^2 + rho w_i) and the threshold alpha * sigma_i^2.
    let prefactor: Vec<f64> = weights
        .iter()
        .map(|w| (weight_sum * weight_sum) / (weight_sum * weight_sum + rho * w))
        .collect();
    let threshold: Vec<f64> = weights.iter().map(|w| alpha / w).collect();

    let mut beta = vec![0.0_f64; m];
    let mut delta0 = 0.0_f64;
    let mut lambda = 0.0_f64;
    let mut iterations = 0;
    let mut converged = false;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;

    while iterations < cfg.max_iter {
        iterations += 1;

        // Weighted sum of the previous iterate, fixed reduction order.
        let mut wsum_beta = 0.0;
        for i in 0..m {
            wsum_beta += weights[i] * beta[i];
        }

        let beta_new: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|i| {
                let others = (wsum_beta - weights[i] * beta[i]) / weight_sum;
                let u = t[i] + delta0 - (rho / weight_sum) * (others - delta0 + lambda / rho);
                prefactor[i] * soft_threshold(u, threshold[i])
            })
            .collect();

        let mut max_step = 0.0_f64;
        for i in 0..m {
            max_step = max_step.max((beta_new[i] - beta[i]).abs());
        }
        beta = beta_new;

        let mut beta_bar = 0.0;
        for i in 0..m {
            beta_bar += weights[i] * beta[i];
        }
        beta_bar /= weight_sum;

        let delta0_new = lambda / (weight_sum + rho) + beta_bar;
        lambda += rho * (beta_bar - delta0_new);
        primal = (beta_bar - delta0_new).abs();
        dual = rho * (delta0_new - delta0).abs();
        delta0 = delta0_new;

        // The consensus residuals alone cannot see per-gene movement (the
        // zero-start dual makes the primal residual vanish identically), so
        // the Jacobi beta step must also have settled.
        if primal < cfg.primal_tol && dual < cfg.dual_tol && rho * max_step < cfg.dual_tol {
            converged = true;
            break;
        }
    }

    let beta_std = Array2::from_shape_vec((m, 1), beta)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(assemble_result(
        &centered,
        design,
        Penalty::Simple,
        beta_std,
        &[delta0],
        variances.shrunken.clone(),
        cfg,
        alpha_max,
        alpha,
        iterations,
        converged,
        primal,
        dual,
    ))
}
