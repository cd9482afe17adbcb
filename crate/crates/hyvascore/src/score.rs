//! The Hyvarinen score and the numerical oracles used to test it.
//!
//! For a (possibly improper) log density `log f(y)` with first and second
//! observation derivatives `d1` and `d2`, the score is
//!
//! `H(y; f) = 2 d2 + d1^2`
//!
//! which does not involve the normalising constant, finite or not. The
//! module also carries composite-Simpson quadrature and the Fisher
//! divergence `D_F(g||f) = 1/2 ∫ (∇log g − ∇log f)^2 g`.

use crate::error::{Error, Result};
use crate::models::Model;
use crate::DataSet;

/// First and second derivatives of a log improper density with respect to
/// the observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YDerivatives {
    pub d1: f64,
    pub d2: f64,
}

impl YDerivatives {
    pub fn new(d1: f64, d2: f64) -> Self {
        YDerivatives { d1, d2 }
    }

    pub fn is_finite(&self) -> bool {
        self.d1.is_finite() && self.d2.is_finite()
    }

    pub fn hscore(&self) -> f64 {
        hscore_from_derivatives(*self)
    }
}

/// `2 d2 + d1^2`. Non-finite inputs propagate so the caller's diagnostics
/// can surface them.
pub fn hscore_from_derivatives(d: YDerivatives) -> f64 {
    2.0 * d.d2 + d.d1 * d.d1
}

/// Multivariate extension: `2 Σ_j d2[j] + ||d1||^2` over per-coordinate
/// derivatives (pure second derivatives only).
pub fn hscore_multivariate(d1: &[f64], d2_diag: &[f64]) -> Result<f64> {
    if d1.len() != d2_diag.len() || d1.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "derivative vectors must have equal nonzero length, got {} and {}",
            d1.len(),
            d2_diag.len()
        )));
    }
    let trace: f64 = d2_diag.iter().sum();
    let sq: f64 = d1.iter().map(|v| v * v).sum();
    Ok(2.0 * trace + sq)
}

/// Per-observation H-scores for a model, with the sum and a count of
/// non-finite entries. Non-finite scores stay in `per_obs` rather than
/// being dropped.
#[derive(Debug, Clone)]
pub struct TotalHScore {
    pub total: f64,
    pub per_obs: Vec<f64>,
    pub n_non_finite: usize,
}

/// Sum of H-scores over observations. Fails when the parameters violate
/// the model's constraints.
pub fn total_hscore(model: &dyn Model, params: &[f64], data: &DataSet) -> Result<TotalHScore> {
    model.check(params, data)?;
    let per_obs: Vec<f64> = (0..data.n()).map(|i| model.hscore_i(params, data, i)).collect();
    let n_non_finite = per_obs.iter().filter(|v| !v.is_finite()).count();
    let total = per_obs.iter().sum();
    Ok(TotalHScore { total, per_obs, n_non_finite })
}

/// Central finite differences of a scalar function of the observation:
/// `d1 = (f(y+h) − f(y−h)) / 2h`, `d2 = (f(y+h) − 2 f(y) + f(y−h)) / h^2`.
pub fn fd_y_derivatives<F: Fn(f64) -> f64>(logf: F, y: f64, h: f64) -> Result<YDerivatives> {
    let (fp, f0, fm) = (logf(y + h), logf(y), logf(y - h));
    if !fp.is_finite() || !f0.is_finite() || !fm.is_finite() {
        return Err(Error::OracleFailure(format!(
            "log density non-finite near y = {y} (values {fm}, {f0}, {fp})"
        )));
    }
    Ok(YDerivatives { d1: (fp - fm) / (2.0 * h), d2: (fp - 2.0 * f0 + fm) / (h * h) })
}

/// Default finite-difference step: balances truncation against roundoff
/// for doubles.
pub fn fd_default_step(y: f64) -> f64 {
    1e-4 * y.abs().max(1.0)
}

/// Composite-Simpson grid on `[lo, hi]` with an odd number of nodes.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureGrid {
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
}

impl QuadratureGrid {
    pub fn new(lo: f64, hi: f64, n_points: usize) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid quadrature bounds [{lo}, {hi}]")));
        }
        if n_points < 3 || n_points % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "Simpson needs an odd node count >= 3, got {n_points}"
            )));
        }
        Ok(QuadratureGrid { lo, hi, n_points })
    }

    /// Default grid for standardised data: `[-10, 10]` with 4001 nodes.
    pub fn standard() -> Self {
        QuadratureGrid { lo: -10.0, hi: 10.0, n_points: 4001 }
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n_points - 1) as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.step();
        (0..self.n_points).map(move |i| self.lo + h * i as f64)
    }

    /// Composite-Simpson integral of `f` over the grid.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let h = self.step();
        let mut acc = 0.0;
        for (i, x) in self.nodes().enumerate() {
            let w = if i == 0 || i == self.n_points - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * f(x);
        }
        acc * h / 3.0
    }
}

/// Fisher divergence `1/2 ∫ (grad_log_g − grad_log_f)^2 g` by composite
/// Simpson. A result below `-1e-10` indicates the quadrature broke down.
pub fn fisher_divergence<G, F, P>(
    grad_log_g: G,
    grad_log_f: F,
    g_pdf: P,
    grid: &QuadratureGrid,
) -> Result<f64>
where
    G: Fn(f64) -> f64,
    F: Fn(f64) -> f64,
    P: Fn(f64) -> f64,
{
    let value = grid.integrate(|x| {
        let d = grad_log_g(x) - grad_log_f(x);
        0.5 * d * d * g_pdf(x)
    });
    if !value.is_finite() || value < -1e-10 {
        return Err(Error::QuadratureFailure(format!("Fisher divergence evaluated to {value}")));
    }
    Ok(value)
}

/// `log Σ exp(v)` without overflow.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT_2PI: f64 = 2.5066282746310002;

    #[test]
    fn hscore_basic_values() {
        assert_eq!(hscore_from_derivatives(YDerivatives::new(0.0, 0.0)), 0.0);
        assert_eq!(hscore_from_derivatives(YDerivatives::new(-1.0, -1.0)), -1.0);
        // Gaussian: d1 = -(y-mu)/s2, d2 = -1/s2 -> -2/s2 + (y-mu)^2/s2^2
        let (y, mu, s2) = (1.3, 0.4, 2.0);
        let d = YDerivatives::new(-(y - mu) / s2, -1.0 / s2);
        let expect = -2.0 / s2 + (y - mu).powi(2) / (s2 * s2);
        assert!((hscore_from_derivatives(d) - expect).abs() < 1e-14);
    }

    #[test]
    fn hscore_algebraic_structure() {
        // linear in d2, quadratic in d1
        let base = YDerivatives::new(0.7, -0.3);
        let h0 = hscore_from_derivatives(base);
        let h_d2 = hscore_from_derivatives(YDerivatives::new(0.7, -0.3 + 1.0));
        assert!((h_d2 - h0 - 2.0).abs() < 1e-14);
        let h_d1 = hscore_from_derivatives(YDerivatives::new(2.0 * 0.7, -0.3));
        assert!((h_d1 - h0 - 3.0 * 0.7 * 0.7).abs() < 1e-14);
    }

    #[test]
    fn multivariate_reduces_to_univariate() {
        let h1 = hscore_multivariate(&[0.4], &[-0.2]).unwrap();
        assert_eq!(h1, hscore_from_derivatives(YDerivatives::new(0.4, -0.2)));
        assert_eq!(hscore_multivariate(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(hscore_multivariate(&[1.0, 2.0], &[-1.0, -2.0]).unwrap(), -1.0);
        assert!(hscore_multivariate(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn fd_on_standard_quadratic() {
        // logf = -y^2/2: d1 = -y, d2 = -1, exact under central differences
        let d = fd_y_derivatives(|y| -y * y / 2.0, 1.0, 1e-4).unwrap();
        assert!((d.d1 + 1.0).abs() < 1e-6);
        assert!((d.d2 + 1.0).abs() < 1e-6);
        let flat = fd_y_derivatives(|_| 3.0, 0.3, 1e-4).unwrap();
        assert_eq!(flat.d1, 0.0);
        assert_eq!(flat.d2, 0.0);
        assert!(fd_y_derivatives(|y| y.ln(), 1e-9, 1e-4).is_err());
    }

    #[test]
    fn simpson_grid_validation() {
        assert!(QuadratureGrid::new(0.0, 1.0, 4).is_err());
        assert!(QuadratureGrid::new(1.0, 0.0, 5).is_err());
        let g = QuadratureGrid::new(0.0, 1.0, 101).unwrap();
        let v = g.integrate(|x| x * x);
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    fn normal_pdf(x: f64, mu: f64, s2: f64) -> f64 {
        (-(x - mu) * (x - mu) / (2.0 * s2)).exp() / (SQRT_2PI * s2.sqrt())
    }

    #[test]
    fn fisher_divergence_identical_and_shifted() {
        let grid = QuadratureGrid::standard();
        let g = |x: f64| -x; // grad log N(0,1)
        let zero = fisher_divergence(g, g, |x| normal_pdf(x, 0.0, 1.0), &grid).unwrap();
        assert!(zero.abs() < 1e-10);

        // g = N(0,1), f = N(0.5,1): gradient difference is the constant 0.5
        let f = |x: f64| -(x - 0.5);
        let v = fisher_divergence(g, f, |x| normal_pdf(x, 0.0, 1.0), &grid).unwrap();
        assert!((v - 0.125).abs() < 1e-6);
    }

    #[test]
    fn fisher_divergence_normalisation_free() {
        // adding a constant to log f leaves the divergence unchanged because
        // only gradients enter
        let grid = QuadratureGrid::standard();
        let g = |x: f64| -x;
        let f = |x: f64| -(x - 0.3);
        let a = fisher_divergence(g, f, |x| normal_pdf(x, 0.0, 1.0), &grid).unwrap();
        // same gradient field, evaluated through a shifted log density
        let fd_shifted = |x: f64| {
            let h = 1e-5;
            let lf = |t: f64| -(t - 0.3) * (t - 0.3) / 2.0 + 17.0;
            (lf(x + h) - lf(x - h)) / (2.0 * h)
        };
        let b = fisher_divergence(g, fd_shifted, |x| normal_pdf(x, 0.0, 1.0), &grid).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn fisher_divergence_monte_carlo_oracle() {
        // g = N(0,1), f = N(0, 2) (variance 2); quadrature vs Monte Carlo
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let grid = QuadratureGrid::standard();
        let g = |x: f64| -x;
        let f = |x: f64| -x / 2.0;
        let quad = fisher_divergence(g, f, |x| normal_pdf(x, 0.0, 1.0), &grid).unwrap();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let term = 0.5 * (g(z) - f(z)).powi(2);
            sum += term;
            sumsq += term * term;
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(
            (quad - mean).abs() < 3.0 * se,
            "quadrature {quad} vs MC {mean} (se {se})"
        );
    }

    #[test]
    fn log_sum_exp_stability() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-10);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }
}
