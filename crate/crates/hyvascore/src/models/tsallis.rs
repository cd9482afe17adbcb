//! Tsallis (density-power) loss applied to the Gaussian regression model.
//!
//! `l_b(y; theta) = -(1/b) f(y; theta)^b + (1/(b+1)) ∫ f(z; theta)^{b+1} dz`
//!
//! with Gaussian `f`, where the integral has the closed form
//! `(2 pi s2)^{-b/2} (b+1)^{-1/2}`. As the residual grows the loss tends
//! to that finite constant, so `exp(-l_b)` is improper; `b -> 0` recovers
//! the Gaussian log likelihood up to an affine shift.

use super::{mad_scale, ols, Model, ParamBlock, ParamLayout, LN_2PI};
use crate::error::{Error, Result};
use crate::score::YDerivatives;
use crate::DataSet;

#[derive(Debug, Clone, PartialEq)]
pub struct TsallisParams {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    /// Robustness exponent, strictly positive.
    pub beta_ts: f64,
}

impl TsallisParams {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.sigma2);
        v.push(self.beta_ts);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let p = v.len() - 2;
        TsallisParams { beta: v[..p].to_vec(), sigma2: v[p], beta_ts: v[p + 1] }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TsallisGaussian;

impl TsallisGaussian {
    fn split<'a>(&self, params: &'a [f64]) -> (&'a [f64], f64, f64) {
        let p = params.len() - 2;
        (&params[..p], params[p], params[p + 1])
    }

    /// `(1/(b+1)) ∫ N(z; mu, s2)^{b+1} dz`
    pub fn integral_term(s2: f64, b: f64) -> f64 {
        (-0.5 * b * (LN_2PI + s2.ln()) - 0.5 * (b + 1.0).ln() - (b + 1.0).ln()).exp()
    }

    fn f_pow_b(r: f64, s2: f64, b: f64) -> f64 {
        // f^b = exp(b log f)
        (b * (-0.5 * (LN_2PI + s2.ln()) - r * r / (2.0 * s2))).exp()
    }
}

impl Model for TsallisGaussian {
    fn name(&self) -> &'static str {
        "tsallis"
    }

    fn layout(&self, data: &DataSet) -> ParamLayout {
        ParamLayout {
            blocks: vec![
                ParamBlock { name: "beta", len: data.p(), positive: false, zero_boundary: false, hyper: false },
                ParamBlock { name: "sigma2", len: 1, positive: true, zero_boundary: false, hyper: false },
                ParamBlock { name: "beta_ts", len: 1, positive: true, zero_boundary: false, hyper: true },
            ],
        }
    }

    fn check(&self, params: &[f64], data: &DataSet) -> Result<()> {
        if params.len() != data.p() + 2 {
            return Err(Error::InvalidArgument("tsallis parameter length mismatch".into()));
        }
        let (_, s2, b) = self.split(params);
        if !(s2 > 0.0) || !(b > 0.0) || params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InfeasibleParameters(format!(
                "require sigma2 > 0 and beta_ts > 0, got ({s2}, {b})"
            )));
        }
        Ok(())
    }

    fn loss_i(&self, params: &[f64], data: &DataSet, i: usize) -> f64 {
        let (beta, s2, b) = self.split(params);
        let r = data.residual(i, beta);
        -Self::f_pow_b(r, s2, b) / b + Self::integral_term(s2, b)
    }

    fn log_density_at(&self, params: &[f64], data: &DataSet, i: usize, y: f64) -> f64 {
        let (beta, s2, b) = self.split(params);
        let r = y - (data.y[i] - data.residual(i, beta));
        Self::f_pow_b(r, s2, b) / b - Self::integral_term(s2, b)
    }

    fn y_derivatives_i(&self, params: &[f64], data: &DataSet, i: usize) -> YDerivatives {
        let (beta, s2, b) = self.split(params);
        let r = data.residual(i, beta);
        let fb = Self::f_pow_b(r, s2, b);
        YDerivatives { d1: -fb * r / s2, d2: fb * (b * r * r / (s2 * s2) - 1.0 / s2) }
    }

    fn moment_init(&self, data: &DataSet) -> Vec<f64> {
        let (beta, resid) = ols(data);
        let s = mad_scale(&resid);
        let mut v = beta;
        v.push(s * s);
        v.push(0.5);
        v
    }
}
