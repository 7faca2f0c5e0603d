//! Penalized weighted least-squares fitting by consensus ADMM.
//!
//! Three interchangeable penalty strategies are registered behind
//! [`FitStrategy`] and selected by name:
//!
//! * `simple` — single covariate, L1 penalty on every coefficient;
//! * `type1`  — p covariates, L1 penalty on the last (covariate-of-interest)
//!   coefficient only, confounders left unpenalized;
//! * `type2`  — p covariates, group-lasso penalty on each gene's coefficient
//!   vector.
//!
//! All strategies share the same consensus structure: the per-gene
//! coefficient updates are coupled only through the precision-weighted
//! coefficient mean, which is split off as a consensus variable with a scaled
//! dual update.

mod multiple;
mod scalar;
mod simple;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::io_units::ExpressionMatrix;
use crate::preprocess::{CenteredExpression, DesignMatrix};
use crate::variance::VarianceEstimates;

pub use multiple::{alpha_max_type1, alpha_max_type2, fit_type1, fit_type2};
pub use scalar::minimize_scalar_group;
pub use simple::{alpha_max_simple, fit_simple};

/// Penalty family; decides both the fitting algorithm and how DE scores are
/// read off the coefficient matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Penalty {
    /// Single covariate, L1 on every coefficient.
    Simple,
    /// L1 on the last covariate only; earlier columns are confounders.
    Type1,
    /// Group lasso on each gene's whole coefficient vector.
    Type2,
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Penalty::Simple => "simple",
            Penalty::Type1 => "type1",
            Penalty::Type2 => "type2",
        };
        f.write_str(s)
    }
}

impl FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "simple" => Ok(Penalty::Simple),
            "type1" => Ok(Penalty::Type1),
            "type2" => Ok(Penalty::Type2),
            other => Err(Error::InvalidConfig(format!(
                "unknown penalty '{other}' (expected simple|type1|type2)"
            ))),
        }
    }
}

/// ADMM solver parameters.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Augmented-Lagrangian parameter; any positive constant works.
    pub rho: f64,
    /// Penalty is set to alpha_ratio * alpha_max unless overridden.
    pub alpha_ratio: f64,
    pub alpha_override: Option<f64>,
    pub max_iter: usize,
    pub primal_tol: f64,
    pub dual_tol: f64,
    /// DE call threshold on the standardized coefficient scale.
    pub de_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: 1.0,
            alpha_ratio: 0.01,
            alpha_override: None,
            max_iter: 1000,
            primal_tol: 1e-6,
            dual_tol: 1e-6,
            de_threshold: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidConfig(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.alpha_ratio > 0.0 && self.alpha_ratio < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha ratio must lie in (0, 1), got {}",
                self.alpha_ratio
            )));
        }
        if let Some(a) = self.alpha_override {
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "alpha override must be non-negative, got {a}"
                )));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.primal_tol > 0.0) || !(self.dual_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if !(self.de_threshold >= 0.0) {
            return Err(Error::InvalidConfig("de threshold must be non-negative".into()));
        }
        Ok(())
    }

    pub(crate) fn resolve_alpha(&self, alpha_max: f64) -> f64 {
        self.alpha_override.unwrap_or(self.alpha_ratio * alpha_max)
    }
}

/// Fitted model: coefficients on both scales, reconstructed intercepts and
/// per-sample offsets, and convergence diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub penalty: Penalty,
    /// Per-gene intercepts on the original covariate scale.
    pub beta0: Vec<f64>,
    /// m×p coefficients on the original covariate scale.
    pub beta: Array2<f64>,
    /// m×p coefficients on the standardized covariate scale.
    pub beta_std: Array2<f64>,
    /// Per-sample normalization offsets, pinned to d[0] = 0.
    pub d: Vec<f64>,
    /// Noise variances the fit was weighted with (shrunken).
    pub sigma2: Vec<f64>,
    pub alpha_max: f64,
    pub alpha_used: f64,
    pub iterations: usize,
    pub converged: bool,
    /// |weighted coefficient mean - consensus variable| at exit.
    pub primal_residual: f64,
    /// rho * |consensus step| at exit.
    pub dual_residual: f64,
    /// Per-gene DE calls: standardized score above the configured threshold.
    pub de_flags: Vec<bool>,
}

impl FitResult {
    pub fn n_genes(&self) -> usize {
        self.beta.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.beta.ncols()
    }

    /// Continuous DE ranking score per gene, on the standardized scale:
    /// |beta| for `simple`, |beta_p| for `type1`, the row 2-norm for `type2`.
    pub fn de_scores(&self) -> Vec<f64> {
        let p = self.n_covariates();
        match self.penalty {
            Penalty::Simple => self.beta_std.column(0).iter().map(|b| b.abs()).collect(),
            Penalty::Type1 => self.beta_std.column(p - 1).iter().map(|b| b.abs()).collect(),
            Penalty::Type2 => self
                .beta_std
                .rows()
                .into_iter()
                .map(|r| r.iter().map(|b| b * b).sum::<f64>().sqrt())
                .collect(),
        }
    }
}

/// Soft-thresholding operator sign(v) * max(|v| - t, 0), the proximal map of
/// t * |.|.
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// A penalized-regression fitting algorithm selectable at runtime.
pub trait FitStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn penalty(&self) -> Penalty;

    /// Smallest penalty weight at which the fit is exactly zero (for `type1`,
    /// zero in the penalized column).
    fn alpha_max(&self, centered: &CenteredExpression, design: &DesignMatrix) -> Result<f64>;

    fn fit(
        &self,
        y: &ExpressionMatrix,
        design: &DesignMatrix,
        variances: &VarianceEstimates,
        cfg: &SolverConfig,
    ) -> Result<FitResult>;
}

struct SimpleStrategy;
struct Type1Strategy;
struct Type2Strategy;

impl FitStrategy for SimpleStrategy {
    fn name(&self) -> &'static str {
        "simple"
    }
    fn penalty(&self) -> Penalty {
        Penalty::Simple
    }
    fn alpha_max(&self, centered: &CenteredExpression, design: &DesignMatrix) -> Result<f64> {
        alpha_max_simple(centered, design)
    }
    fn fit(
        &self,
        y: &ExpressionMatrix,
        design: &DesignMatrix,
        variances: &VarianceEstimates,
        cfg: &SolverConfig,
    ) -> Result<FitResult> {
        fit_simple(y, design, variances, cfg)
    }
}

impl FitStrategy for Type1Strategy {
    fn name(&self) -> &'static str {
        "type1"
    }
    fn penalty(&self) -> Penalty {
        Penalty::Type1
    }
    fn alpha_max(&self, centered: &CenteredExpression, design: &DesignMatrix) -> Result<f64> {
        alpha_max_type1(centered, design)
    }
    fn fit(
        &self,
        y: &ExpressionMatrix,
        design: &DesignMatrix,
        variances: &VarianceEstimates,
        cfg: &SolverConfig,
    ) -> Result<FitResult> {
        fit_type1(y, design, variances, cfg)
    }
}

impl FitStrategy for Type2Strategy {
    fn name(&self) -> &'static str {
        "type2"
    }
    fn penalty(&self) -> Penalty {
        Penalty::Type2
    }
    fn alpha_max(&self, centered: &CenteredExpression, design: &DesignMatrix) -> Result<f64> {
        alpha_max_type2(centered, design)
    }
    fn fit(
        &self,
        y: &ExpressionMatrix,
        design: &DesignMatrix,
        variances: &VarianceEstimates,
        cfg: &SolverConfig,
    ) -> Result<FitResult> {
        fit_type2(y, design, variances, cfg)
    }
}

static STRATEGIES: [&dyn FitStrategy; 3] = [&SimpleStrategy, &Type1Strategy, &Type2Strategy];

/// All registered fitting strategies.
pub fn strategies() -> &'static [&'static dyn FitStrategy] {
    &STRATEGIES
}

/// Looks a strategy up by its registered name.
pub fn strategy(name: &str) -> Option<&'static dyn FitStrategy> {
    STRATEGIES.iter().copied().find(|s| s.name() == name)
}

/// Strategy for a penalty enum value.
pub fn strategy_for(penalty: Penalty) -> &'static dyn FitStrategy {
    match penalty {
        Penalty::Simple => &SimpleStrategy,
        Penalty::Type1 => &Type1Strategy,
        Penalty::Type2 => &Type2Strategy,
    }
}

/// Shared epilogue of every strategy: reconstruct intercepts and offsets from
/// the centering statistics and the consensus variable, undo the covariate
/// standardization, and derive DE flags.
#[allow(clippy::too_many_arguments)]
pub(crate) fn assemble_result(
    centered: &CenteredExpression,
    design: &DesignMatrix,
    penalty: Penalty,
    beta_std: Array2<f64>,
    consensus: &[f64],
    sigma2: Vec<f64>,
    cfg: &SolverConfig,
    alpha_max: f64,
    alpha_used: f64,
    iterations: usize,
    converged: bool,
    primal_residual: f64,
    dual_residual: f64,
) -> FitResult {
    let (m, p) = beta_std.dim();
    let n = centered.n_samples();
    let x = &design.values;

    // beta0_i = rowmean_i + wcolmean_1 - grandmean - x_1' * consensus, with
    // sample 1 the pinning sample for d; d_j follows from the weighted column
    // means, both on the standardized covariate scale.
    let x0_dot = |v: &[f64]| -> f64 { (0..p).map(|c| x[[0, c]] * v[c]).sum() };
    let beta0_std: Vec<f64> = (0..m)
        .map(|i| {
            centered.row_means[i] + centered.weighted_col_means[0] - centered.weighted_grand_mean
                - x0_dot(consensus)
        })
        .collect();
    let mut d = vec![0.0_f64; n];
    for j in 1..n {
        let xdiff_dot: f64 = (0..p).map(|c| (x[[j, c]] - x[[0, c]]) * consensus[c]).sum();
        d[j] = (centered.weighted_col_means[j] - centered.weighted_col_means[0]) - xdiff_dot;
    }

    // Back to the original covariate scale.
    let mut beta = beta_std.clone();
    for c in 0..p {
        let s = design.scale[c];
        beta.column_mut(c).mapv_inplace(|b| b / s);
    }
    let beta0: Vec<f64> = (0..m)
        .map(|i| {
            let correction: f64 = (0..p)
                .map(|c| beta_std[[i, c]] * design.center[c] / design.scale[c])
                .sum();
            beta0_std[i] - correction
        })
        .collect();

    let mut result = FitResult {
        penalty,
        beta0,
        beta,
        beta_std,
        d,
        sigma2,
        alpha_max,
        alpha_used,
        iterations,
        converged,
        primal_residual,
        dual_residual,
        de_flags: Vec::new(),
    };
    result.de_flags = result
        .de_scores()
        .iter()
        .map(|s| *s > cfg.de_threshold)
        .collect();
    result
}
