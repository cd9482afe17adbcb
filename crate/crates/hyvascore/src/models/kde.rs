//! Tempered kernel density estimation as an improper model.
//!
//! The in-sample pseudo density keeps the self term,
//!
//! `g_h(y_i) = (1/(n h sqrt(2 pi))) (1 + sum_{j != i} exp(-(y_i-y_j)^2 / 2h^2))`
//!
//! which integrates to infinity in `y_i`; the self kernel contributes the
//! constant 1 and drops out of the observation derivatives. Raising the
//! density to a tempering power `w > 0` scales the base derivatives, so
//! the score factorises as `H_w = 2 w D2 + w^2 D1^2`.

use super::{Model, ParamBlock, ParamLayout, LN_2PI};
use crate::error::{Error, Result};
use crate::score::{QuadratureGrid, YDerivatives};
use crate::DataSet;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeParams {
    /// Kernel bandwidth (units of y).
    pub h: f64,
    /// Tempering exponent.
    pub w: f64,
}

impl KdeParams {
    /// Flat layout is `[h^2, w]`; the bandwidth prior is on `h^2`.
    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.h * self.h, self.w]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        KdeParams { h: v[0].sqrt(), w: v[1] }
    }
}

/// Sums driving the base (w = 1) derivatives at slot `i` with value `x`:
/// numerators exclude the self term, the denominator includes it.
fn slot_sums(data_y: &[f64], i: usize, x: f64, h: f64) -> (f64, f64, f64) {
    let h2 = h * h;
    let (mut s1, mut s2, mut d) = (0.0, 0.0, 1.0);
    for (j, yj) in data_y.iter().enumerate() {
        if j == i {
            continue;
        }
        let dx = x - yj;
        let e = (-dx * dx / (2.0 * h2)).exp();
        s1 += dx / h2 * e;
        s2 += (dx * dx / (h2 * h2) - 1.0 / h2) * e;
        d += e;
    }
    (s1, s2, d)
}

/// Base first/second derivatives of `log g_h` at slot `i`, value `x`.
fn base_derivatives(data_y: &[f64], i: usize, x: f64, h: f64) -> (f64, f64) {
    let (s1, s2, d) = slot_sums(data_y, i, x, h);
    let d1 = -s1 / d;
    (d1, s2 / d - d1 * d1)
}

/// `w log g_h(y_i)` with the self term included.
pub fn kde_log_improper(i: usize, data_y: &[f64], params: &KdeParams) -> f64 {
    let (_, _, d) = slot_sums(data_y, i, data_y[i], params.h);
    params.w * (d.ln() - (data_y.len() as f64 * params.h).ln() - 0.5 * LN_2PI)
}

/// Log KDE at an arbitrary point (all kernels contribute), stabilised for
/// far-tail evaluation.
pub fn kde_log_density(x: f64, data_y: &[f64], h: f64) -> f64 {
    let h2 = h * h;
    let mut amax = f64::NEG_INFINITY;
    for yj in data_y {
        let a = -(x - yj) * (x - yj) / (2.0 * h2);
        if a > amax {
            amax = a;
        }
    }
    let sum: f64 = data_y.iter().map(|yj| (-(x - yj) * (x - yj) / (2.0 * h2) - amax).exp()).sum();
    amax + sum.ln() - (data_y.len() as f64 * h).ln() - 0.5 * LN_2PI
}

/// `d/dx log g_h(x)` at an arbitrary point, stabilised so the tails return
/// finite values instead of 0/0.
pub fn kde_dlog_density(x: f64, data_y: &[f64], h: f64) -> f64 {
    let h2 = h * h;
    let mut amax = f64::NEG_INFINITY;
    for yj in data_y {
        let a = -(x - yj) * (x - yj) / (2.0 * h2);
        if a > amax {
            amax = a;
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for yj in data_y {
        let dx = x - yj;
        let e = (-dx * dx / (2.0 * h2) - amax).exp();
        num += dx / h2 * e;
        den += e;
    }
    -num / den
}

/// Normalised predictive density `g_h(x)^w / ∫ g_h(t)^w dt` for a future
/// observation.
pub fn kde_predictive_density(
    x: f64,
    data_y: &[f64],
    params: &KdeParams,
    grid: &QuadratureGrid,
) -> Result<f64> {
    let pred = KdePredictive::new(data_y.to_vec(), *params, grid)?;
    Ok(pred.density(x))
}

/// Precomputed normaliser for repeated predictive evaluations.
#[derive(Debug, Clone)]
pub struct KdePredictive {
    pub data_y: Vec<f64>,
    pub params: KdeParams,
    pub log_normaliser: f64,
}

impl KdePredictive {
    pub fn new(data_y: Vec<f64>, params: KdeParams, grid: &QuadratureGrid) -> Result<Self> {
        if !(params.w > 0.0) || !(params.h > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "KDE parameters must be positive, got h = {}, w = {}",
                params.h, params.w
            )));
        }
        let z = grid.integrate(|t| (params.w * kde_log_density(t, &data_y, params.h)).exp());
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::QuadratureFailure(format!("KDE normaliser evaluated to {z}")));
        }
        Ok(KdePredictive { data_y, params, log_normaliser: z.ln() })
    }

    pub fn density(&self, x: f64) -> f64 {
        (self.params.w * kde_log_density(x, &self.data_y, self.params.h) - self.log_normaliser)
            .exp()
    }

    /// `d/dx log` of the predictive; the normaliser drops out.
    pub fn dlog(&self, x: f64) -> f64 {
        self.params.w * kde_dlog_density(x, &self.data_y, self.params.h)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TemperedKde;

impl TemperedKde {
    fn split(params: &[f64]) -> (f64, f64) {
        (params[0].sqrt(), params[1]) // (h, w)
    }
}

impl Model for TemperedKde {
    fn name(&self) -> &'static str {
        "kde"
    }

    fn layout(&self, _data: &DataSet) -> ParamLayout {
        ParamLayout {
            blocks: vec![
                ParamBlock { name: "h2", len: 1, positive: true, zero_boundary: false, hyper: true },
                ParamBlock { name: "w", len: 1, positive: true, zero_boundary: false, hyper: true },
            ],
        }
    }

    fn check(&self, params: &[f64], _data: &DataSet) -> Result<()> {
        if params.len() != 2 {
            return Err(Error::InvalidArgument("KDE parameter length mismatch".into()));
        }
        if !(params[0] > 0.0) || !(params[1] > 0.0) {
            return Err(Error::InfeasibleParameters(format!(
                "require h2 > 0 and w > 0, got ({}, {})",
                params[0], params[1]
            )));
        }
        Ok(())
    }

    fn loss_i(&self, params: &[f64], data: &DataSet, i: usize) -> f64 {
        let (h, w) = Self::split(params);
        -kde_log_improper(i, &data.y, &KdeParams { h, w })
    }

    fn log_density_at(&self, params: &[f64], data: &DataSet, i: usize, y: f64) -> f64 {
        let (h, w) = Self::split(params);
        let (_, _, d) = slot_sums(&data.y, i, y, h);
        w * (d.ln() - (data.y.len() as f64 * h).ln() - 0.5 * LN_2PI)
    }

    fn y_derivatives_i(&self, params: &[f64], data: &DataSet, i: usize) -> YDerivatives {
        let (h, w) = Self::split(params);
        let (d1, d2) = base_derivatives(&data.y, i, data.y[i], h);
        YDerivatives { d1: w * d1, d2: w * d2 }
    }

    fn hscore_i(&self, params: &[f64], data: &DataSet, i: usize) -> f64 {
        let (h, w) = Self::split(params);
        let (d1, d2) = base_derivatives(&data.y, i, data.y[i], h);
        2.0 * w * d2 + w * w * d1 * d1
    }

    // O(n^2) total; worth parallelising for the benchmark fits.
    fn total_hscore_value(&self, params: &[f64], data: &DataSet) -> f64 {
        let (h, w) = Self::split(params);
        (0..data.n())
            .into_par_iter()
            .map(|i| {
                let (d1, d2) = base_derivatives(&data.y, i, data.y[i], h);
                2.0 * w * d2 + w * w * d1 * d1
            })
            .sum()
    }

    fn moment_init(&self, data: &DataSet) -> Vec<f64> {
        let n = data.n() as f64;
        let mean = data.y.iter().sum::<f64>() / n;
        let sd = (data.y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0))
            .sqrt()
            .max(1e-3);
        let h = 0.9 * sd * n.powf(-0.2);
        vec![h * h, 1.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::fd_y_derivatives;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SQRT_2PI: f64 = 2.5066282746310002;

    #[test]
    fn log_improper_closed_cases() {
        // single observation: self term only
        let p = KdeParams { h: 0.7, w: 1.3 };
        let v = kde_log_improper(0, &[2.0], &p);
        assert!((v - 1.3 * (1.0 / (0.7 * SQRT_2PI)).ln()).abs() < 1e-12);

        // two coincident points, h = 1, w = 1
        let p1 = KdeParams { h: 1.0, w: 1.0 };
        let v = kde_log_improper(0, &[0.0, 0.0], &p1);
        assert!((v - (1.0 / SQRT_2PI).ln()).abs() < 1e-12);

        // y = {-1, 1}: log((1 + e^-2) / (2 sqrt(2 pi)))
        let v = kde_log_improper(0, &[-1.0, 1.0], &p1);
        let expect = ((1.0 + (-2.0f64).exp()) / (2.0 * SQRT_2PI)).ln();
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_fd_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let y: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
        let data = DataSet::from_response(y).unwrap();
        let m = TemperedKde;
        for &w in &[1.0, 1.7] {
            let h: f64 = rng.random_range(0.3..1.2);
            let params = [h * h, w];
            for i in 0..data.n() {
                let d = m.y_derivatives_i(&params, &data, i);
                let fd = fd_y_derivatives(
                    |v| m.log_density_at(&params, &data, i, v),
                    data.y[i],
                    1e-4,
                )
                .unwrap();
                assert!((d.d1 - fd.d1).abs() < 1e-4 * d.d1.abs().max(1.0));
                assert!((d.d2 - fd.d2).abs() < 1e-4 * d.d2.abs().max(1.0));
                let h_closed = m.hscore_i(&params, &data, i);
                let h_fd = 2.0 * fd.d2 + fd.d1 * fd.d1;
                assert!((h_closed - h_fd).abs() < 1e-4 * h_closed.abs().max(1.0));
            }
        }
    }

    #[test]
    fn tempering_factorisation() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..50 {
            let y: Vec<f64> = (0..30).map(|_| rng.random_range(-3.0..3.0)).collect();
            let data = DataSet::from_response(y).unwrap();
            let m = TemperedKde;
            let h: f64 = rng.random_range(0.2..1.5);
            let w: f64 = rng.random_range(0.3..3.0);
            for i in 0..data.n() {
                let base = m.y_derivatives_i(&[h * h, 1.0], &data, i);
                let expect = 2.0 * w * base.d2 + w * w * base.d1 * base.d1;
                let got = m.hscore_i(&[h * h, w], &data, i);
                assert!((got - expect).abs() < 1e-10 * got.abs().max(1.0));
            }
        }
    }

    #[test]
    fn exchangeable_and_translation_equivariant() {
        let p = KdeParams { h: 0.6, w: 1.2 };
        let y = vec![0.3, -1.0, 2.0, 0.9];
        let v = kde_log_improper(1, &y, &p);
        // permute the other entries
        let perm = vec![2.0, -1.0, 0.9, 0.3];
        assert!((kde_log_improper(1, &perm, &p) - v).abs() < 1e-12);
        // shift everything by a constant
        let c = 5.7;
        let shifted: Vec<f64> = y.iter().map(|t| t + c).collect();
        assert!((kde_log_improper(1, &shifted, &p) - v).abs() < 1e-9);
    }

    #[test]
    fn predictive_density_cases() {
        let grid = QuadratureGrid::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let y: Vec<f64> = (0..50).map(|_| rng.random_range(-2.0..2.0)).collect();

        // w = 1: the normaliser is 1 and the predictive is the plain KDE
        let p1 = KdeParams { h: 0.4, w: 1.0 };
        let pred = KdePredictive::new(y.clone(), p1, &grid).unwrap();
        assert!(pred.log_normaliser.abs() < 1e-6);
        let x = 0.37;
        assert!((pred.density(x) - kde_log_density(x, &y, 0.4).exp()).abs() < 1e-6);

        // w = 2, n = 1: a proper Gaussian with sd h / sqrt(2)
        let p2 = KdeParams { h: 0.8, w: 2.0 };
        let single = KdePredictive::new(vec![0.5], p2, &grid).unwrap();
        let sd = 0.8 / 2f64.sqrt();
        let x = 0.9;
        let expect = (-(x - 0.5f64).powi(2) / (2.0 * sd * sd)).exp() / (sd * SQRT_2PI);
        assert!((single.density(x) - expect).abs() < 1e-6);

        // w = 0.5: integrates to one on the grid
        let p3 = KdeParams { h: 0.4, w: 0.5 };
        let pred = KdePredictive::new(y, p3, &grid).unwrap();
        let total = grid.integrate(|t| pred.density(t));
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn stabilised_tail_gradient_is_finite() {
        let y = vec![-0.5, 0.0, 0.5];
        let g = kde_dlog_density(-40.0, &y, 0.2);
        assert!(g.is_finite());
        assert!(g > 0.0); // pull back toward the data
    }
}
