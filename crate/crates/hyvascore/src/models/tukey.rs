//! Tukey's-loss regression as an improper model.
//!
//! The loss is parameterised by `nu2 = 1/kappa2^2`, so the Gaussian model
//! sits at the boundary `nu2 = 0` with a finite Hessian. Residuals within
//! `kappa2 * sigma` follow the usual biweight polynomial; beyond the
//! cutoff the loss is the constant `0.5 log(2 pi s2) + kappa2^2/6`, which
//! makes `exp(-loss)` integrate to infinity.
//!
//! The score involves the indicator `I(|r| <= kappa2 sigma)`, which is not
//! differentiable at the cutoff. The smoothed mode replaces it with
//! `sigmoid(k2 (kappa2 sigma - sqrt(r^2 + 1/k1)))`, keeping symmetry in
//! the residual; `k1 = k2 = 100` by default.

use super::{mad_scale, ols, Model, ParamBlock, ParamLayout, LN_2PI};
use crate::error::{Error, Result};
use crate::score::YDerivatives;
use crate::DataSet;

#[derive(Debug, Clone, PartialEq)]
pub struct TukeyParams {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    /// Reparameterised cutoff, `nu2 = 1/kappa2^2`; zero recovers the
    /// Gaussian model.
    pub nu2: f64,
}

impl TukeyParams {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.sigma2);
        v.push(self.nu2);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let p = v.len() - 2;
        TukeyParams { beta: v[..p].to_vec(), sigma2: v[p], nu2: v[p + 1] }
    }

    pub fn kappa2(&self) -> f64 {
        if self.nu2 == 0.0 {
            f64::INFINITY
        } else {
            1.0 / self.nu2.sqrt()
        }
    }
}

/// `|x| ~ sqrt(x^2 + 1/k1)`; upper bound on `|x|`, exact as `k1 -> inf`.
pub fn smooth_abs(x: f64, k1: f64) -> f64 {
    (x * x + 1.0 / k1).sqrt()
}

/// `I(x >= 0) ~ 1/(1 + exp(-k2 x))`, value 1/2 at the origin.
pub fn smooth_indicator(x: f64, k2: f64) -> f64 {
    let t = k2 * x;
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    /// Exact indicator; the score is identically zero outside the cutoff.
    Exact,
    /// Differentiable approximation with sharpness constants `k1`, `k2`.
    Smoothed { k1: f64, k2: f64 },
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::Smoothed { k1: 100.0, k2: 100.0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TukeyRegression {
    pub smoothing: Smoothing,
}

impl Default for TukeyRegression {
    fn default() -> Self {
        TukeyRegression { smoothing: Smoothing::default() }
    }
}

impl TukeyRegression {
    pub fn exact() -> Self {
        TukeyRegression { smoothing: Smoothing::Exact }
    }

    fn split<'a>(&self, params: &'a [f64]) -> (&'a [f64], f64, f64) {
        let p = params.len() - 2;
        (&params[..p], params[p], params[p + 1])
    }

    /// Loss derivative polynomial inside the cutoff (derivative of the
    /// loss in y): `r/s2 - 2 nu r^3/s2^2 + nu^2 r^5/s2^3`.
    fn poly1(r: f64, s2: f64, nu: f64) -> f64 {
        r / s2 - 2.0 * nu * r.powi(3) / (s2 * s2) + nu * nu * r.powi(5) / (s2 * s2 * s2)
    }

    /// Second derivative inside the cutoff:
    /// `1/s2 - 6 nu r^2/s2^2 + 5 nu^2 r^4/s2^3`.
    fn poly2(r: f64, s2: f64, nu: f64) -> f64 {
        1.0 / s2 - 6.0 * nu * r * r / (s2 * s2) + 5.0 * nu * nu * r.powi(4) / (s2 * s2 * s2)
    }

    /// Biweight polynomial part of the loss inside the cutoff.
    fn rho_in(r: f64, s2: f64, nu: f64) -> f64 {
        let z2 = r * r / s2;
        z2 / 2.0 - nu * z2 * z2 / 2.0 + nu * nu * z2 * z2 * z2 / 6.0
    }

    fn indicator(&self, r: f64, s2: f64, nu: f64) -> f64 {
        if nu == 0.0 {
            return 1.0;
        }
        let cutoff = (s2 / nu).sqrt(); // kappa2 * sigma
        match self.smoothing {
            Smoothing::Exact => {
                if r.abs() <= cutoff {
                    1.0
                } else {
                    0.0
                }
            }
            Smoothing::Smoothed { k1, k2 } => smooth_indicator(cutoff - smooth_abs(r, k1), k2),
        }
    }

    fn loss_at(&self, r: f64, s2: f64, nu: f64) -> f64 {
        let base = 0.5 * (LN_2PI + s2.ln());
        if nu == 0.0 {
            return base + r * r / (2.0 * s2);
        }
        let flat = 1.0 / (6.0 * nu); // kappa2^2 / 6
        match self.smoothing {
            Smoothing::Exact => {
                if r * r * nu <= s2 {
                    base + Self::rho_in(r, s2, nu)
                } else {
                    base + flat
                }
            }
            Smoothing::Smoothed { .. } => {
                let ind = self.indicator(r, s2, nu);
                if ind == 1.0 {
                    base + Self::rho_in(r, s2, nu)
                } else if ind == 0.0 {
                    base + flat
                } else {
                    base + ind * Self::rho_in(r, s2, nu) + (1.0 - ind) * flat
                }
            }
        }
    }

    fn derivatives_at(&self, r: f64, s2: f64, nu: f64) -> YDerivatives {
        if nu == 0.0 {
            return YDerivatives { d1: -r / s2, d2: -1.0 / s2 };
        }
        match self.smoothing {
            Smoothing::Exact => {
                if r * r * nu <= s2 {
                    YDerivatives { d1: -Self::poly1(r, s2, nu), d2: -Self::poly2(r, s2, nu) }
                } else {
                    YDerivatives { d1: 0.0, d2: 0.0 }
                }
            }
            Smoothing::Smoothed { k1, k2 } => {
                let cutoff = (s2 / nu).sqrt();
                let sab = smooth_abs(r, k1);
                let ind = smooth_indicator(cutoff - sab, k2);
                let sig1 = ind * (1.0 - ind);
                let du = -k2 * r / sab;
                let ddu = -k2 / (k1 * sab * sab * sab);
                let ind1 = sig1 * du;
                let ind2 = sig1 * (1.0 - 2.0 * ind) * du * du + sig1 * ddu;
                let gap = Self::rho_in(r, s2, nu) - 1.0 / (6.0 * nu);
                let (p1, p2) = (Self::poly1(r, s2, nu), Self::poly2(r, s2, nu));
                // suppress exp(-u) underflow turning 0 * inf into NaN
                let l1 = if ind1 == 0.0 { ind * p1 } else { ind1 * gap + ind * p1 };
                let l2 = if ind1 == 0.0 && ind2 == 0.0 {
                    ind * p2
                } else {
                    ind2 * gap + 2.0 * ind1 * p1 + ind * p2
                };
                YDerivatives { d1: -l1, d2: -l2 }
            }
        }
    }

    fn hscore_at(&self, r: f64, s2: f64, nu: f64) -> f64 {
        let ind = self.indicator(r, s2, nu);
        if ind == 0.0 {
            return 0.0;
        }
        let p1 = Self::poly1(r, s2, nu);
        ind * (p1 * p1 - 2.0 * Self::poly2(r, s2, nu))
    }
}

impl Model for TukeyRegression {
    fn name(&self) -> &'static str {
        "tukey"
    }

    fn layout(&self, data: &DataSet) -> ParamLayout {
        ParamLayout {
            blocks: vec![
                ParamBlock { name: "beta", len: data.p(), positive: false, zero_boundary: false, hyper: false },
                ParamBlock { name: "sigma2", len: 1, positive: true, zero_boundary: false, hyper: false },
                ParamBlock { name: "nu2", len: 1, positive: true, zero_boundary: true, hyper: true },
            ],
        }
    }

    fn check(&self, params: &[f64], data: &DataSet) -> Result<()> {
        if params.len() != data.p() + 2 {
            return Err(Error::InvalidArgument("tukey parameter length mismatch".into()));
        }
        let (_, s2, nu) = self.split(params);
        if !(s2 > 0.0) || !(nu >= 0.0) || params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InfeasibleParameters(format!(
                "require sigma2 > 0 and nu2 >= 0, got ({s2}, {nu})"
            )));
        }
        Ok(())
    }

    fn loss_i(&self, params: &[f64], data: &DataSet, i: usize) -> f64 {
        let (beta, s2, nu) = self.split(params);
        self.loss_at(data.residual(i, beta), s2, nu)
    }

    fn log_density_at(&self, params: &[f64], data: &DataSet, i: usize, y: f64) -> f64 {
        let (beta, s2, nu) = self.split(params);
        let r = y - (data.y[i] - data.residual(i, beta));
        -self.loss_at(r, s2, nu)
    }

    fn y_derivatives_i(&self, params: &[f64], data: &DataSet, i: usize) -> YDerivatives {
        let (beta, s2, nu) = self.split(params);
        self.derivatives_at(data.residual(i, beta), s2, nu)
    }

    fn hscore_i(&self, params: &[f64], data: &DataSet, i: usize) -> f64 {
        let (beta, s2, nu) = self.split(params);
        self.hscore_at(data.residual(i, beta), s2, nu)
    }

    /// Polynomial continuation past `nu2 = 0`: the cutoff is treated as
    /// infinite so the score stays smooth for slightly negative `nu2`.
    fn hscore_extended_i(&self, params: &[f64], data: &DataSet, i: usize) -> f64 {
        let (beta, s2, nu) = self.split(params);
        let r = data.residual(i, beta);
        if nu <= 0.0 {
            let p1 = Self::poly1(r, s2, nu);
            return p1 * p1 - 2.0 * Self::poly2(r, s2, nu);
        }
        self.hscore_at(r, s2, nu)
    }

    fn moment_init(&self, data: &DataSet) -> Vec<f64> {
        let (beta, resid) = ols(data);
        let s = mad_scale(&resid);
        let mut v = beta;
        v.push(s * s);
        v.push(1.0 / 9.0); // kappa2 = 3
        v
    }
}

/// Left-hand side of the breakdown constraint,
/// `sum_i rho(r_i/sigma, kappa2) / rho(kappa2, kappa2)` with
/// `rho(z, k) = min(z^2/2 - z^4/(2k^2) + z^6/(6k^4), k^2/6)`.
pub fn breakdown_lhs(beta: &[f64], sigma2: f64, nu2: f64, data: &DataSet) -> f64 {
    if nu2 == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..data.n() {
        let z2 = data.residual(i, beta).powi(2) / sigma2;
        let rho = (z2 / 2.0 - nu2 * z2 * z2 / 2.0 + nu2 * nu2 * z2 * z2 * z2 / 6.0)
            .min(1.0 / (6.0 * nu2));
        acc += rho;
    }
    6.0 * nu2 * acc
}

/// Breakdown-point constraint of S-estimation, adopted as a default
/// feasible region: the weighted loss mass may not exceed `n/2 - p`.
pub fn breakdown_feasible(params: &TukeyParams, data: &DataSet) -> bool {
    let margin = data.n() as f64 / 2.0 - data.p() as f64;
    if margin <= 0.0 {
        return false;
    }
    breakdown_lhs(&params.beta, params.sigma2, params.nu2, data) <= margin
}
