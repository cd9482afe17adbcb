//! Dense BFGS with finite-difference gradients and a backtracking Armijo
//! line search. Problems here are small (a handful of coordinates), so
//! the full inverse-Hessian approximation is kept.

use super::fd::fd_gradient;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Converged when `||g|| <= tol_rel * (1 + |f|)`.
    pub tol_rel: f64,
    pub fd_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iter: 300, tol_rel: 1e-5, fd_step: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn bfgs<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsOutcome {
    let d = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    if !fx.is_finite() {
        return BfgsOutcome { x: x0.to_vec(), f: fx, grad_norm: f64::NAN, iterations: 0, converged: false };
    }
    let mut g = DVector::from_vec(fd_gradient(&f, x.as_slice(), opts.fd_step));
    let mut h_inv = DMatrix::<f64>::identity(d, d);
    let mut first_update_done = false;
    let mut stagnant = 0usize;
    let mut converged = false;
    let mut iter = 0usize;

    while iter < opts.max_iter {
        let gnorm = g.norm();
        if !gnorm.is_finite() {
            break;
        }
        if gnorm <= opts.tol_rel * (1.0 + fx.abs()) {
            converged = true;
            break;
        }

        let mut dir = -(&h_inv * &g);
        let mut descent = dir.dot(&g);
        if !(descent < -1e-14 * gnorm * dir.norm().max(1e-300)) {
            // not a descent direction: reset to steepest descent
            h_inv = DMatrix::identity(d, d);
            dir = -g.clone();
            descent = -gnorm * gnorm;
        }

        // Armijo backtracking; cap the very first step to unit length
        let mut alpha =
            if first_update_done { 1.0 } else { (1.0 / dir.norm().max(1.0)).min(1.0) };
        let c1 = 1e-4;
        let mut accepted = false;
        let mut x_new = x.clone();
        let mut f_new = fx;
        for _ in 0..60 {
            x_new = &x + alpha * &dir;
            f_new = f(x_new.as_slice());
            if f_new.is_finite() && f_new <= fx + c1 * alpha * descent {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        debug_assert!(f_new <= fx + 1e-9 * (1.0 + fx.abs()), "accepted step increased objective");

        let g_new = DVector::from_vec(fd_gradient(&f, x_new.as_slice(), opts.fd_step));
        let s = &x_new - &x;
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        if sy > 1e-10 * s.norm() * yv.norm() {
            if !first_update_done {
                let scale = sy / yv.dot(&yv);
                if scale.is_finite() && scale > 0.0 {
                    h_inv = DMatrix::identity(d, d) * scale;
                }
                first_update_done = true;
            }
            // BFGS inverse update
            let rho = 1.0 / sy;
            let hy = &h_inv * &yv;
            let yhy = yv.dot(&hy);
            let ss = &s * s.transpose();
            let hys = &hy * s.transpose();
            h_inv = &h_inv + (sy + yhy) * rho * rho * &ss - rho * (&hys + hys.transpose());
        }

        if (fx - f_new).abs() <= 1e-12 * (1.0 + fx.abs()) {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        iter += 1;
        if stagnant >= 3 {
            // objective has flattened; accept if the gradient is small
            converged = g.norm() <= opts.tol_rel * (1.0 + fx.abs());
            break;
        }
    }

    BfgsOutcome { x: x.as_slice().to_vec(), f: fx, grad_norm: g.norm(), iterations: iter, converged }
}
