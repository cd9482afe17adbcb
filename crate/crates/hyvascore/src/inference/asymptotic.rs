//! Asymptotic mean-squared-error diagnostic for the Tukey location
//! estimate under epsilon-contamination:
//!
//! `MSE ~ (theta* - theta_0)' (theta* - theta_0) + (1/n) tr{J^-1 K J^-1}`
//!
//! where `theta*` minimises the expected Tukey loss under the
//! contaminated truth, and `J`, `K` are quadrature expectations of the
//! loss Hessian and gradient outer product.
//!
//! The joint (location, scale) minimisation of a redescending loss is
//! degenerate: once enough mass sits beyond the cutoff the loss saturates
//! and `sigma2 -> 0` wins. The population breakdown constraint
//! `E[rho]/rho(k,k) <= 1/2 - p/n` excludes that slide; for small cutoffs
//! the scale solution sits on the constraint, which is the S-estimation
//! structure, and the location variance is then the scalar sandwich with
//! the scale pinned.

use super::fd::{fd_gradient, fd_hessian};
use super::optim::{bfgs, BfgsOptions};
use crate::error::{Error, Result};
use crate::models::LN_2PI;
use crate::score::QuadratureGrid;
use nalgebra::{DMatrix, DVector};

/// `g(y) = (1 - eps) N(clean) + eps N(outlier)`, components as
/// (mean, sd).
#[derive(Debug, Clone, Copy)]
pub struct ContaminationSpec {
    pub eps: f64,
    pub clean: (f64, f64),
    pub outlier: (f64, f64),
}

impl ContaminationSpec {
    pub fn pdf(&self, y: f64) -> f64 {
        let phi = |y: f64, m: f64, s: f64| {
            (-(y - m) * (y - m) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
        };
        (1.0 - self.eps) * phi(y, self.clean.0, self.clean.1)
            + self.eps * phi(y, self.outlier.0, self.outlier.1)
    }

    pub fn grid(&self) -> QuadratureGrid {
        let lo = (self.clean.0 - 9.0 * self.clean.1).min(self.outlier.0 - 9.0 * self.outlier.1);
        let hi = (self.clean.0 + 9.0 * self.clean.1).max(self.outlier.0 + 9.0 * self.outlier.1);
        QuadratureGrid::new(lo, hi, 3001).expect("valid contamination grid")
    }

    pub fn mean(&self) -> f64 {
        (1.0 - self.eps) * self.clean.0 + self.eps * self.outlier.0
    }
}

#[derive(Debug, Clone)]
pub struct AsymptoticMse {
    pub bias2: f64,
    pub variance: f64,
    pub rmse: f64,
    /// Expected-loss minimiser `(beta, sigma2)` under the contaminated
    /// truth.
    pub theta_star: (f64, f64),
    /// The population breakdown constraint is active at the solution.
    pub constraint_active: bool,
}

fn tukey_loss_scalar(y: f64, b: f64, s2: f64, nu: f64) -> f64 {
    let base = 0.5 * (LN_2PI + s2.ln());
    let r = y - b;
    if nu == 0.0 {
        return base + r * r / (2.0 * s2);
    }
    let z2 = r * r / s2;
    if z2 * nu <= 1.0 {
        base + z2 / 2.0 - nu * z2 * z2 / 2.0 + nu * nu * z2 * z2 * z2 / 6.0
    } else {
        base + 1.0 / (6.0 * nu)
    }
}

/// `rho(r/sigma, kappa) / rho(kappa, kappa)` in the `nu` parameterisation.
fn rho_ratio(y: f64, b: f64, s2: f64, nu: f64) -> f64 {
    if nu == 0.0 {
        return 0.0;
    }
    let z2 = (y - b) * (y - b) / s2;
    let rho = (z2 / 2.0 - nu * z2 * z2 / 2.0 + nu * nu * z2 * z2 * z2 / 6.0).min(1.0 / (6.0 * nu));
    6.0 * nu * rho
}

/// Bias-variance decomposition of the asymptotic MSE of the Tukey
/// location estimate at cutoff `kappa2` (infinite recovers the Gaussian
/// loss), sample size `n`. Reported for the location coordinate.
pub fn asymptotic_mse(kappa2: f64, g: &ContaminationSpec, n: usize) -> Result<AsymptoticMse> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let nu = if kappa2.is_infinite() { 0.0 } else { 1.0 / (kappa2 * kappa2) };
    let grid = g.grid();
    let nodes: Vec<(f64, f64)> = {
        let h = grid.step();
        grid.nodes()
            .enumerate()
            .map(|(i, y)| {
                let w = if i == 0 || i == grid.n_points - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                (y, w * h / 3.0 * g.pdf(y))
            })
            .collect()
    };

    // population breakdown budget, p = 1 (intercept only)
    let budget = 0.5 - 1.0 / n as f64;
    let breakdown_lhs = |b: f64, s2: f64| -> f64 {
        nodes.iter().map(|(y, w)| w * rho_ratio(*y, b, s2, nu)).sum()
    };

    let expected_loss = |p: &[f64]| -> f64 {
        let (b, s2) = (p[0], p[1].exp());
        if breakdown_lhs(b, s2) > budget {
            return f64::INFINITY;
        }
        nodes.iter().map(|(y, w)| w * tukey_loss_scalar(*y, b, s2, nu)).sum()
    };
    let mut init = [g.clean.0, (g.clean.1 * g.clean.1).ln()];
    // feasible start: inflate the scale until the constraint holds
    for _ in 0..60 {
        if expected_loss(&init).is_finite() {
            break;
        }
        init[1] += 2f64.ln();
    }
    if !expected_loss(&init).is_finite() {
        return Err(Error::OptimizationFailure("no feasible start for the expected loss".into()));
    }
    let out = bfgs(expected_loss, &init, &BfgsOptions { max_iter: 500, ..Default::default() });
    let theta = [out.x[0], out.x[1].exp()];
    let constraint_active = breakdown_lhs(theta[0], theta[1]) > 0.97 * budget;
    if !out.converged && !constraint_active {
        return Err(Error::OptimizationFailure(format!(
            "expected-loss minimisation stalled at gradient norm {}",
            out.grad_norm
        )));
    }

    let bias2 = (theta[0] - g.clean.0).powi(2);
    let variance = if constraint_active {
        // scale determined by the constraint: scalar sandwich for the
        // location with sigma2 pinned
        let (mut jb, mut kb) = (0.0, 0.0);
        for (y, w) in &nodes {
            let loss_b = |p: &[f64]| tukey_loss_scalar(*y, p[0], theta[1], nu);
            let gb = fd_gradient(&loss_b, &theta[..1], 1e-5)[0];
            let (hb, _) = fd_hessian(&loss_b, &theta[..1], &[false]);
            kb += w * gb * gb;
            jb += w * hb[(0, 0)];
        }
        if jb.abs() < 1e-12 {
            return Err(Error::OptimizationFailure("degenerate location curvature".into()));
        }
        kb / (jb * jb) / n as f64
    } else {
        let mut j = DMatrix::zeros(2, 2);
        let mut k = DMatrix::zeros(2, 2);
        for (y, w) in &nodes {
            let loss_at = |p: &[f64]| tukey_loss_scalar(*y, p[0], p[1], nu);
            let grad = DVector::from_vec(fd_gradient(&loss_at, &theta, 1e-5));
            let (hess, _) = fd_hessian(&loss_at, &theta, &[false, true]);
            k += &grad * grad.transpose() * *w;
            j += hess * *w;
        }
        let j_inv = j
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::OptimizationFailure("singular expected Hessian".into()))?;
        let cov = &j_inv * &k * &j_inv;
        cov[(0, 0)] / n as f64
    };

    Ok(AsymptoticMse {
        bias2,
        variance,
        rmse: (bias2 + variance).sqrt(),
        theta_star: (theta[0], theta[1]),
        constraint_active,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_spec() -> ContaminationSpec {
        ContaminationSpec { eps: 0.1, clean: (0.0, 1.0), outlier: (5.0, 3.0) }
    }

    #[test]
    fn zero_contamination_has_zero_bias() {
        let g = ContaminationSpec { eps: 0.0, clean: (0.0, 1.0), outlier: (5.0, 3.0) };
        for kappa in [3.0, 5.0, f64::INFINITY] {
            let r = asymptotic_mse(kappa, &g, 500).unwrap();
            assert!(r.bias2 < 1e-6, "kappa {kappa}: bias2 {}", r.bias2);
        }
    }

    #[test]
    fn gaussian_limit_bias_is_the_mixture_mean() {
        let g = paper_spec();
        let r = asymptotic_mse(f64::INFINITY, &g, 500).unwrap();
        // E_g[y] = 0.5: the squared-loss minimiser is the grand mean
        assert!((r.theta_star.0 - g.mean()).abs() / g.mean() < 0.05, "{:?}", r.theta_star);
        assert!(!r.constraint_active);
    }

    #[test]
    fn rmse_curve_shape_on_paper_contamination() {
        let g = paper_spec();
        let r5 = asymptotic_mse(5.0, &g, 500).unwrap();
        let r10 = asymptotic_mse(10.0, &g, 500).unwrap();
        let r2 = asymptotic_mse(2.0, &g, 500).unwrap();
        assert!(r5.rmse < r10.rmse, "{} vs {}", r5.rmse, r10.rmse);
        assert!(r5.rmse < r2.rmse, "{} vs {}", r5.rmse, r2.rmse);
    }
}
