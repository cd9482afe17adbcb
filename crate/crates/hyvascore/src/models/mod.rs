//! Concrete model families: Gaussian regression, Tukey's-loss regression,
//! tempered kernel density estimation and the Tsallis-Gaussian loss.
//!
//! Every family exposes a per-observation loss (negative log improper
//! density), the log density as a function of the observation (for the
//! finite-difference oracles), analytic observation derivatives, and the
//! per-observation Hyvarinen score. Parameters travel as flat `&[f64]`
//! vectors whose layout the model describes.

mod gaussian;
mod kde;
mod tsallis;
mod tukey;

pub use gaussian::{GaussianParams, GaussianRegression};
pub use kde::{
    kde_dlog_density, kde_log_density, kde_predictive_density, KdeParams, KdePredictive,
    TemperedKde,
};
pub use tsallis::{TsallisGaussian, TsallisParams};
pub use tukey::{
    breakdown_feasible, breakdown_lhs, smooth_abs, smooth_indicator, Smoothing, TukeyParams,
    TukeyRegression,
};

use crate::error::Result;
use crate::score::YDerivatives;
use crate::DataSet;

/// One named block of the flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct ParamBlock {
    pub name: &'static str,
    pub len: usize,
    /// Positive parameters are optimised on the log scale.
    pub positive: bool,
    /// Blocks whose support closes at zero (e.g. the Tukey cutoff
    /// reparameterisation), where a boundary probe makes sense.
    pub zero_boundary: bool,
    /// Hyperparameter blocks (the kappa part of (theta, kappa)); general
    /// Bayesian fits require these pinned.
    pub hyper: bool,
}

#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub blocks: Vec<ParamBlock>,
}

impl ParamLayout {
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.len).sum()
    }

    /// Index range of a named block within the flat vector.
    pub fn range_of(&self, name: &str) -> Option<std::ops::Range<usize>> {
        let mut offset = 0;
        for b in &self.blocks {
            if b.name == name {
                return Some(offset..offset + b.len);
            }
            offset += b.len;
        }
        None
    }

    /// Per-coordinate block metadata, flattened.
    pub fn coords(&self) -> Vec<ParamBlock> {
        let mut out = Vec::with_capacity(self.dim());
        for b in &self.blocks {
            for _ in 0..b.len {
                out.push(*b);
            }
        }
        out
    }
}

pub trait Model: Sync {
    fn name(&self) -> &'static str;

    fn layout(&self, data: &DataSet) -> ParamLayout;

    /// Parameter invariants (positivity and the like).
    fn check(&self, params: &[f64], data: &DataSet) -> Result<()>;

    /// Negative log improper density of observation `i`.
    fn loss_i(&self, params: &[f64], data: &DataSet, i: usize) -> f64;

    /// Log improper density for slot `i` evaluated at an arbitrary
    /// observation value `y` (covariates and, for KDE, the other
    /// observations stay fixed).
    fn log_density_at(&self, params: &[f64], data: &DataSet, i: usize, y: f64) -> f64;

    /// Analytic first/second derivatives of `log_density_at` in `y`,
    /// evaluated at the observed `y_i`.
    fn y_derivatives_i(&self, params: &[f64], data: &DataSet, i: usize) -> YDerivatives;

    /// Per-observation Hyvarinen score.
    fn hscore_i(&self, params: &[f64], data: &DataSet, i: usize) -> f64 {
        self.y_derivatives_i(params, data, i).hscore()
    }

    /// Smooth continuation of `hscore_i` past parameter-support boundaries,
    /// used only by finite-difference Hessians at near-boundary modes.
    fn hscore_extended_i(&self, params: &[f64], data: &DataSet, i: usize) -> f64 {
        self.hscore_i(params, data, i)
    }

    fn total_loss(&self, params: &[f64], data: &DataSet) -> f64 {
        (0..data.n()).map(|i| self.loss_i(params, data, i)).sum()
    }

    fn total_hscore_value(&self, params: &[f64], data: &DataSet) -> f64 {
        (0..data.n()).map(|i| self.hscore_i(params, data, i)).sum()
    }

    /// Moment-based starting point for optimisation (no feasibility
    /// repair; the fitting layer handles that).
    fn moment_init(&self, data: &DataSet) -> Vec<f64>;
}

/// Ordinary least squares via the normal equations; also returns residuals.
pub(crate) fn ols(data: &DataSet) -> (Vec<f64>, Vec<f64>) {
    let x = &data.x;
    let y = nalgebra::DVector::from_column_slice(&data.y);
    let xtx = x.transpose() * x;
    let xty = x.transpose() * &y;
    let beta = xtx
        .clone()
        .cholesky()
        .map(|c| c.solve(&xty))
        .unwrap_or_else(|| xtx.lu().solve(&xty).unwrap_or_else(|| nalgebra::DVector::zeros(x.ncols())));
    let beta: Vec<f64> = beta.iter().cloned().collect();
    let resid: Vec<f64> = (0..data.n()).map(|i| data.residual(i, &beta)).collect();
    (beta, resid)
}

/// Robust residual scale: 1.4826 * median(|r - median(r)|), with a
/// standard-deviation fallback for degenerate samples.
pub(crate) fn mad_scale(resid: &[f64]) -> f64 {
    let med = median(resid);
    let devs: Vec<f64> = resid.iter().map(|r| (r - med).abs()).collect();
    let mad = 1.4826 * median(&devs);
    if mad > 1e-12 {
        mad
    } else {
        let n = resid.len() as f64;
        let mean = resid.iter().sum::<f64>() / n;
        let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n.max(2.0);
        var.sqrt().max(1e-6)
    }
}

pub(crate) fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub(crate) const LN_2PI: f64 = 1.8378770664093453;
