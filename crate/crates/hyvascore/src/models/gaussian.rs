//! Gaussian linear regression. Loss is the negative Gaussian log
//! likelihood; its Hyvarinen score is `-2/s2 + r^2/s2^2`.

use super::{mad_scale, ols, Model, ParamBlock, ParamLayout, LN_2PI};
use crate::error::{Error, Result};
use crate::score::YDerivatives;
use crate::DataSet;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub beta: Vec<f64>,
    pub sigma2: f64,
}

impl GaussianParams {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.sigma2);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let p = v.len() - 1;
        GaussianParams { beta: v[..p].to_vec(), sigma2: v[p] }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianRegression;

impl GaussianRegression {
    fn split<'a>(&self, params: &'a [f64]) -> (&'a [f64], f64) {
        let p = params.len() - 1;
        (&params[..p], params[p])
    }
}

impl Model for GaussianRegression {
    fn name(&self) -> &'static str {
        "gaussian"
    }

    fn layout(&self, data: &DataSet) -> ParamLayout {
        ParamLayout {
            blocks: vec![
                ParamBlock { name: "beta", len: data.p(), positive: false, zero_boundary: false, hyper: false },
                ParamBlock { name: "sigma2", len: 1, positive: true, zero_boundary: false, hyper: false },
            ],
        }
    }

    fn check(&self, params: &[f64], data: &DataSet) -> Result<()> {
        if params.len() != data.p() + 1 {
            return Err(Error::InvalidArgument("gaussian parameter length mismatch".into()));
        }
        let (_, s2) = self.split(params);
        if !(s2 > 0.0) || params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InfeasibleParameters(format!("sigma2 = {s2} must be positive")));
        }
        Ok(())
    }

    fn loss_i(&self, params: &[f64], data: &DataSet, i: usize) -> f64 {
        let (beta, s2) = self.split(params);
        let r = data.residual(i, beta);
        0.5 * (LN_2PI + s2.ln()) + r * r / (2.0 * s2)
    }

    fn log_density_at(&self, params: &[f64], data: &DataSet, i: usize, y: f64) -> f64 {
        let (beta, s2) = self.split(params);
        let r = y - (data.y[i] - data.residual(i, beta));
        -(0.5 * (LN_2PI + s2.ln()) + r * r / (2.0 * s2))
    }

    fn y_derivatives_i(&self, params: &[f64], data: &DataSet, i: usize) -> YDerivatives {
        let (beta, s2) = self.split(params);
        let r = data.residual(i, beta);
        YDerivatives { d1: -r / s2, d2: -1.0 / s2 }
    }

    fn moment_init(&self, data: &DataSet) -> Vec<f64> {
        let (beta, resid) = ols(data);
        let s = mad_scale(&resid);
        let mut v = beta;
        v.push(s * s);
        v
    }
}
