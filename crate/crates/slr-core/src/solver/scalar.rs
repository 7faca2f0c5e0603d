//! Scalar minimization used by the group-lasso coordinate descent.

use crate::error::{Error, Result};

use super::soft_threshold;

const GOLDEN: f64 = 0.381_966_011_250_105_1; // (3 - sqrt(5)) / 2

/// Brent's bounded minimization (golden section with parabolic
/// interpolation), no derivatives. Returns the abscissa of the minimum of a
/// unimodal `f` on `[a, b]` to absolute tolerance `xtol`.
pub(crate) fn brent_min<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    xtol: f64,
    max_iter: usize,
) -> f64 {
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d = 0.0_f64;
    let mut e = 0.0_f64;

    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol = f64::EPSILON.sqrt() * x.abs() + xtol;
        let tol2 = 2.0 * tol;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }

        let mut use_golden = true;
        if e.abs() > tol {
            // parabola through (v, fv), (w, fw), (x, fx)
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol } else { -tol };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x < m { b - x } else { a - x };
            d = GOLDEN * e;
        }

        let u = if d.abs() >= tol {
            x + d
        } else if d > 0.0 {
            x + tol
        } else {
            x - tol
        };
        let fu = f(u);

        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    x
}

/// Minimizes the scalar restriction of the group-lasso subproblem,
///
///   phi(b) = 1/2 ||z_s * b - r||^2 + alpha * sqrt(b^2 + other_norm_sq),
///
/// whose minimizer lies between 0 and the ordinary least-squares value
/// z_s'r / ||z_s||^2 (bracket reversed when the OLS value is negative).
/// With `other_norm_sq == 0` this reduces to the scalar lasso and is solved
/// in closed form; with `alpha == 0` it is the OLS value. The search runs to
/// scalar tolerance 1e-9.
pub fn minimize_scalar_group(
    z_s: &[f64],
    r: &[f64],
    alpha: f64,
    other_norm_sq: f64,
) -> Result<f64> {
    if z_s.len() != r.len() {
        return Err(Error::InvalidInput(
            "direction and residual lengths differ".into(),
        ));
    }
    if !(alpha >= 0.0) || !(other_norm_sq >= 0.0) {
        return Err(Error::InvalidInput(
            "alpha and other_norm_sq must be non-negative".into(),
        ));
    }
    let znorm2: f64 = z_s.iter().map(|z| z * z).sum();
    if znorm2 == 0.0 {
        return Err(Error::InvalidInput("zero coordinate direction".into()));
    }
    let zr: f64 = z_s.iter().zip(r).map(|(z, r)| z * r).sum();

    if alpha == 0.0 {
        return Ok(zr / znorm2);
    }
    if other_norm_sq == 0.0 {
        return Ok(soft_threshold(zr, alpha) / znorm2);
    }

    let ols = zr / znorm2;
    if ols == 0.0 {
        return Ok(0.0);
    }
    let rnorm2: f64 = r.iter().map(|v| v * v).sum();
    let phi = |b: f64| 0.5 * (znorm2 * b * b - 2.0 * zr * b + rnorm2)
        + alpha * (b * b + other_norm_sq).sqrt();
    let (lo, hi) = if ols > 0.0 { (0.0, ols) } else { (ols, 0.0) };
    let best = brent_min(phi, lo, hi, 1e-9, 200);
    // the bracket ends are candidates too when the window is tiny
    let mut out = best;
    let mut fout = phi(best);
    for cand in [lo, hi] {
        let fc = phi(cand);
        if fc < fout {
            fout = fc;
            out = cand;
        }
    }
    Ok(out)
}
