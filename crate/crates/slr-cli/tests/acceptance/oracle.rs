//! Independent brute-force reference for the acceptance suite.
//!
//! Everything here is built from first principles on materialized matrices:
//! the centering is the literal four-term formula, the objective is
//! 1/2 ||Sigma^(1/2) (Ytilde - M B X')||_F^2 + penalty with
//! M = I - (1/S) 1 w' formed explicitly, and the solver is FISTA on that
//! objective. None of it shares code with the library's solver path.

use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OraclePenalty {
    /// L1 on every entry (single covariate).
    AllL1,
    /// L1 on the last column only.
    LastColumnL1,
    /// L2 norm of each row.
    RowL2,
}

/// Literal double centering: y_ij - rowmean_i - weighted colmean_j + grand.
pub fn centered(y: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let (m, n) = y.shape();
    let s: f64 = weights.iter().sum();
    let row_means: Vec<f64> = (0..m).map(|i| (0..n).map(|j| y[(i, j)]).sum::<f64>() / n as f64).collect();
    let col_means: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| weights[i] * y[(i, j)]).sum::<f64>() / s)
        .collect();
    let grand: f64 = (0..m).map(|i| weights[i] * row_means[i]).sum::<f64>() / s;
    DMatrix::from_fn(m, n, |i, j| y[(i, j)] - row_means[i] - col_means[j] + grand)
}

/// M = I_m - (1/S) 1 w', materialized.
fn m_matrix(weights: &[f64]) -> DMatrix<f64> {
    let m = weights.len();
    let s: f64 = weights.iter().sum();
    DMatrix::from_fn(m, m, |i, l| {
        let id = if i == l { 1.0 } else { 0.0 };
        id - weights[l] / s
    })
}

fn penalty_value(b: &DMatrix<f64>, alpha: f64, penalty: OraclePenalty) -> f64 {
    let (m, p) = b.shape();
    match penalty {
        OraclePenalty::AllL1 => alpha * b.iter().map(|v| v.abs()).sum::<f64>(),
        OraclePenalty::LastColumnL1 => {
            alpha * (0..m).map(|i| b[(i, p - 1)].abs()).sum::<f64>()
        }
        OraclePenalty::RowL2 => {
            alpha
                * (0..m)
                    .map(|i| (0..p).map(|c| b[(i, c)] * b[(i, c)]).sum::<f64>().sqrt())
                    .sum::<f64>()
        }
    }
}

/// Objective value at B (standardized covariate scale).
pub fn objective(
    ytilde: &DMatrix<f64>,
    x: &DMatrix<f64>,
    weights: &[f64],
    alpha: f64,
    b: &DMatrix<f64>,
    penalty: OraclePenalty,
) -> f64 {
    let m_mat = m_matrix(weights);
    let residual = ytilde - &m_mat * b * x.transpose();
    let mut smooth = 0.0;
    for i in 0..residual.nrows() {
        for j in 0..residual.ncols() {
            smooth += 0.5 * weights[i] * residual[(i, j)] * residual[(i, j)];
        }
    }
    smooth + penalty_value(b, alpha, penalty)
}

/// Smooth-part gradient M' Sigma (M B X' - Ytilde) X at B.
fn gradient(
    ytilde: &DMatrix<f64>,
    x: &DMatrix<f64>,
    weights: &[f64],
    b: &DMatrix<f64>,
) -> DMatrix<f64> {
    let m_mat = m_matrix(weights);
    let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(weights));
    m_mat.transpose() * sigma * (&m_mat * b * x.transpose() - ytilde) * x
}

fn prox(b: &mut DMatrix<f64>, t: f64, penalty: OraclePenalty) {
    let (m, p) = b.shape();
    let soft = |v: f64| -> f64 {
        if v > t {
            v - t
        } else if v < -t {
            v + t
        } else {
            0.0
        }
    };
    match penalty {
        OraclePenalty::AllL1 => {
            for v in b.iter_mut() {
                *v = soft(*v);
            }
        }
        OraclePenalty::LastColumnL1 => {
            for i in 0..m {
                b[(i, p - 1)] = soft(b[(i, p - 1)]);
            }
        }
        OraclePenalty::RowL2 => {
            for i in 0..m {
                let norm: f64 = (0..p).map(|c| b[(i, c)] * b[(i, c)]).sum::<f64>().sqrt();
                let scale = if norm > t { 1.0 - t / norm } else { 0.0 };
                for c in 0..p {
                    b[(i, c)] *= scale;
                }
            }
        }
    }
}

/// FISTA with adaptive restart on the penalized objective, run until
/// successive iterates move by less than `tol` in max norm. Returns the
/// coefficient matrix.
pub fn proximal_gradient(
    ytilde: &DMatrix<f64>,
    x: &DMatrix<f64>,
    weights: &[f64],
    alpha: f64,
    penalty: OraclePenalty,
    tol: f64,
    max_iter: usize,
) -> DMatrix<f64> {
    let (m, _) = ytilde.shape();
    let p = x.ncols();

    // hoisted pieces: gradient(B) = (M'SM) B (X'X) - M'S Ytilde X
    let m_mat = m_matrix(weights);
    let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(weights));
    let msm = m_mat.transpose() * &sigma * &m_mat;
    let xtx = x.transpose() * x;
    let linear = m_mat.transpose() * &sigma * ytilde * x;

    // Lipschitz constant of the gradient
    let l_m = msm
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0_f64, |a, &v| a.max(v));
    let l_x = xtx
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0_f64, |a, &v| a.max(v));
    let step = 1.0 / (l_m * l_x).max(1e-12);

    let mut b = DMatrix::zeros(m, p);
    let mut z = b.clone();
    let mut t_accel = 1.0_f64;
    for _ in 0..max_iter {
        let grad = &msm * &z * &xtx - &linear;
        let mut b_next = &z - grad * step;
        prox(&mut b_next, alpha * step, penalty);

        let diff = &b_next - &b;
        let move_size = diff.amax();
        // adaptive restart: drop the momentum when it points uphill
        let uphill = (&z - &b_next).dot(&diff) > 0.0;
        if uphill {
            t_accel = 1.0;
            z = b_next.clone();
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_accel * t_accel).sqrt());
            z = &b_next + &diff * ((t_accel - 1.0) / t_next);
            t_accel = t_next;
        }
        b = b_next;
        if move_size < tol {
            break;
        }
    }
    b
}

/// Max KKT violation of the subgradient conditions at B.
pub fn kkt_residual(
    ytilde: &DMatrix<f64>,
    x: &DMatrix<f64>,
    weights: &[f64],
    alpha: f64,
    b: &DMatrix<f64>,
    penalty: OraclePenalty,
) -> f64 {
    let grad = gradient(ytilde, x, weights, b);
    let (m, p) = b.shape();
    let mut worst = 0.0_f64;
    match penalty {
        OraclePenalty::AllL1 => {
            for i in 0..m {
                for c in 0..p {
                    let g = grad[(i, c)];
                    let v = b[(i, c)];
                    let r = if v != 0.0 {
                        (g + alpha * v.signum()).abs()
                    } else {
                        (g.abs() - alpha).max(0.0)
                    };
                    worst = worst.max(r);
                }
            }
        }
        OraclePenalty::LastColumnL1 => {
            for i in 0..m {
                for c in 0..p - 1 {
                    worst = worst.max(grad[(i, c)].abs());
                }
                let g = grad[(i, p - 1)];
                let v = b[(i, p - 1)];
                let r = if v != 0.0 {
                    (g + alpha * v.signum()).abs()
                } else {
                    (g.abs() - alpha).max(0.0)
                };
                worst = worst.max(r);
            }
        }
        OraclePenalty::RowL2 => {
            for i in 0..m {
                let norm: f64 = (0..p).map(|c| b[(i, c)] * b[(i, c)]).sum::<f64>().sqrt();
                let r = if norm > 0.0 {
                    (0..p)
                        .map(|c| (grad[(i, c)] + alpha * b[(i, c)] / norm).powi(2))
                        .sum::<f64>()
                        .sqrt()
                } else {
                    let gnorm: f64 = (0..p).map(|c| grad[(i, c)].powi(2)).sum::<f64>().sqrt();
                    (gnorm - alpha).max(0.0)
                };
                worst = worst.max(r);
            }
        }
    }
    worst
}
