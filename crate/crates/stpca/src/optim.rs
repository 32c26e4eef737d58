//! A dense BFGS quasi-Newton minimizer with backtracking line search.
//!
//! Convergence is declared when the per-iteration objective improvement
//! drops below `rel_tol * (|f| + rel_tol)`, mirroring the relative-tolerance
//! stopping rule of common general-purpose implementations, or when the
//! gradient norm becomes negligible.

use crate::error::{Result, StpcaError};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct BfgsConfig {
    /// Relative improvement tolerance for the stopping rule.
    pub rel_tol: f64,
    /// Cap on objective/gradient evaluations.
    pub max_evals: usize,
    /// Absolute gradient-norm stop, scaled by `max(1, |f|)`.
    pub grad_tol: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        BfgsConfig {
            rel_tol: 1e-8,
            max_evals: 100_000,
            grad_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f`, which writes the gradient into its second argument and
/// returns the objective value.
pub fn minimize<F>(mut f: F, x0: DVector<f64>, cfg: &BfgsConfig) -> Result<BfgsResult>
where
    F: FnMut(&DVector<f64>, &mut DVector<f64>) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut grad = DVector::zeros(n);
    let mut fx = f(&x, &mut grad);
    let mut evals = 1usize;
    if !fx.is_finite() {
        return Err(StpcaError::numerical(
            "bfgs",
            "objective non-finite at the initial point",
        ));
    }

    let mut h = DMatrix::<f64>::identity(n, n); // inverse Hessian approximation
    let mut first_update = true;
    let mut iterations = 0usize;
    let mut converged = false;

    while evals < cfg.max_evals {
        let gnorm = grad.norm();
        if gnorm <= cfg.grad_tol * fx.abs().max(1.0) {
            converged = true;
            break;
        }

        let mut dir = -(&h * &grad);
        let mut slope = dir.dot(&grad);
        if slope >= 0.0 {
            // Bad curvature information; fall back to steepest descent.
            dir = -grad.clone();
            slope = -gnorm * gnorm;
            h = DMatrix::identity(n, n);
            first_update = true;
        }

        // Backtracking Armijo line search.
        let mut step = 1.0;
        let c1 = 1e-4;
        let mut accepted = false;
        let mut x_new = x.clone();
        let mut grad_new = DVector::zeros(n);
        let mut f_new = fx;
        while evals < cfg.max_evals {
            x_new = &x + &dir * step;
            f_new = f(&x_new, &mut grad_new);
            evals += 1;
            if f_new.is_finite() && f_new <= fx + c1 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                break;
            }
        }
        if !accepted {
            // No further progress possible along the search direction.
            converged = true;
            break;
        }

        let s = &x_new - &x;
        let y = &grad_new - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first_update {
                // Scale the initial inverse Hessian (Nocedal & Wright 6.20).
                let gamma = sy / y.dot(&y);
                h = DMatrix::identity(n, n) * gamma;
                first_update = false;
            }
            let rho = 1.0 / sy;
            // H <- (I - rho s y') H (I - rho y s') + rho s s'
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // Expanded form avoids building the rank-one projectors.
            h += (&s * s.transpose()) * (rho * rho * yhy + rho);
            h -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }

        let improvement = fx - f_new;
        x = x_new;
        grad = grad_new;
        let f_old = fx;
        fx = f_new;
        iterations += 1;

        if improvement <= cfg.rel_tol * (f_old.abs() + cfg.rel_tol) {
            converged = true;
            break;
        }
    }

    if !fx.is_finite() {
        return Err(StpcaError::numerical("bfgs", "objective became non-finite"));
    }

    Ok(BfgsResult {
        x,
        value: fx,
        iterations,
        evaluations: evals,
        converged,
    })
}
