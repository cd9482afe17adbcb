//! Adaptive random-walk Metropolis over the learned coordinates.
//!
//! The proposal is a Gaussian with covariance taken from the fit's
//! inverse Hessian (regularised), with a global scale adapted toward the
//! 0.234 acceptance target during burn-in only, so the post-burn-in chain
//! is a fixed-kernel Markov chain.

use super::FitResult;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy)]
pub struct SamplerOptions {
    pub n_draws: usize,
    /// Adaptation window; defaults to `max(1000, n_draws / 2)` when zero.
    pub burn_in: usize,
    pub seed: u64,
    pub target_accept: f64,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions { n_draws: 5000, burn_in: 0, seed: 0, target_accept: 0.234 }
    }
}

#[derive(Debug, Clone)]
pub struct Draws {
    /// Post-burn-in draws over the learned coordinates (original scale).
    pub samples: Vec<Vec<f64>>,
    /// Acceptance rate after adaptation stopped.
    pub acceptance_rate: f64,
    pub warnings: Vec<String>,
}

impl Draws {
    pub fn mean(&self) -> Vec<f64> {
        let d = self.samples[0].len();
        let mut m = vec![0.0; d];
        for s in &self.samples {
            for k in 0..d {
                m[k] += s[k];
            }
        }
        let n = self.samples.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.samples[0].len();
        let m = self.mean();
        let mut c = DMatrix::zeros(d, d);
        for s in &self.samples {
            for i in 0..d {
                for j in 0..d {
                    c[(i, j)] += (s[i] - m[i]) * (s[j] - m[j]);
                }
            }
        }
        c / (self.samples.len() as f64 - 1.0)
    }
}

/// Cholesky factor of the regularised inverse Hessian.
fn proposal_root(hessian: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = hessian.nrows();
    let trace: f64 = (0..d).map(|i| hessian[(i, i)].abs()).sum();
    let mut lambda = 0.0;
    for _ in 0..16 {
        let h = hessian + DMatrix::identity(d, d) * lambda;
        if let Some(chol) = h.cholesky() {
            let cov = chol.inverse();
            if let Some(root) = cov.cholesky() {
                return Ok(root.l());
            }
        }
        lambda = if lambda == 0.0 { 1e-8 * trace.max(1.0) / d as f64 } else { lambda * 10.0 };
    }
    Err(Error::OptimizationFailure("proposal covariance could not be regularised".into()))
}

/// Draw from the posterior whose negative log density is `neg_log_post`,
/// starting at a converged fit. Deterministic given the seed.
pub fn sample_posterior<F: Fn(&[f64]) -> f64>(
    neg_log_post: F,
    init: &FitResult,
    opts: &SamplerOptions,
) -> Result<Draws> {
    if !init.converged {
        return Err(Error::InvalidArgument("sampler requires a converged fit".into()));
    }
    let d = init.d();
    let burn_in = if opts.burn_in == 0 { (opts.n_draws / 2).max(1000) } else { opts.burn_in };
    let root = proposal_root(&init.hessian)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = DVector::from_vec(init.free_mode());
    let mut fx = neg_log_post(x.as_slice());
    if !fx.is_finite() {
        return Err(Error::InvalidArgument("objective non-finite at the mode".into()));
    }

    let mut log_scale = (2.38 / (d as f64).sqrt()).ln();
    let mut samples = Vec::with_capacity(opts.n_draws);
    let (mut acc_batch, mut batch_n) = (0usize, 0usize);
    let (mut acc_main, mut main_n) = (0usize, 0usize);

    let total = burn_in + opts.n_draws;
    for it in 0..total {
        let scale = log_scale.exp();
        let z: DVector<f64> = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(&mut rng)));
        let prop = &x + scale * (&root * z);
        let fp = neg_log_post(prop.as_slice());
        let accept = fp.is_finite() && rng.random::<f64>().ln() < fx - fp;
        if accept {
            x = prop;
            fx = fp;
        }

        if it < burn_in {
            acc_batch += usize::from(accept);
            batch_n += 1;
            if batch_n == 50 {
                let rate = acc_batch as f64 / batch_n as f64;
                log_scale += 0.5 * (rate - opts.target_accept);
                acc_batch = 0;
                batch_n = 0;
            }
        } else {
            acc_main += usize::from(accept);
            main_n += 1;
            samples.push(x.as_slice().to_vec());
        }
    }

    let acceptance_rate = acc_main as f64 / main_n.max(1) as f64;
    let mut warnings = Vec::new();
    if !(0.05..=0.7).contains(&acceptance_rate) {
        warnings.push(format!(
            "acceptance rate {acceptance_rate:.3} outside [0.05, 0.7] after adaptation"
        ));
    }
    Ok(Draws { samples, acceptance_rate, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_fit(mean: Vec<f64>, prec: DMatrix<f64>) -> FitResult {
        let d = mean.len();
        FitResult {
            model_name: "test".into(),
            mode: mean,
            free_idx: (0..d).collect(),
            objective: 0.0,
            hessian: prec,
            hessian_asym: 0.0,
            converged: true,
            n_restarts_used: 1,
            gradient_norm: 0.0,
            near_boundary: false,
        }
    }

    fn two_d_target() -> (Vec<f64>, DMatrix<f64>, impl Fn(&[f64]) -> f64) {
        let mean = vec![1.0, -0.5];
        let prec = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let m = mean.clone();
        let p = prec.clone();
        let f = move |x: &[f64]| {
            let dx = DVector::from_vec(vec![x[0] - m[0], x[1] - m[1]]);
            0.5 * (dx.transpose() * &p * dx)[(0, 0)]
        };
        (mean, prec, f)
    }

    #[test]
    fn recovers_gaussian_mean_and_acceptance() {
        let (mean, prec, f) = two_d_target();
        let init = gaussian_fit(mean.clone(), prec.clone());
        let opts = SamplerOptions { n_draws: 20_000, seed: 9, ..Default::default() };
        let draws = sample_posterior(&f, &init, &opts).unwrap();
        assert!(draws.warnings.is_empty(), "{:?}", draws.warnings);
        assert!((draws.acceptance_rate - 0.234).abs() < 0.1);

        let cov_true = prec.try_inverse().unwrap();
        let m = draws.mean();
        // 3 x MC standard error with a generous IACT allowance
        for k in 0..2 {
            let se = (cov_true[(k, k)] / draws.samples.len() as f64).sqrt() * 10.0;
            assert!((m[k] - mean[k]).abs() < 3.0 * se, "mean[{k}] = {} vs {}", m[k], mean[k]);
        }
    }

    #[test]
    fn covariance_close_to_target_at_many_draws() {
        let (mean, prec, f) = two_d_target();
        let init = gaussian_fit(mean, prec.clone());
        let opts = SamplerOptions { n_draws: 100_000, seed: 10, ..Default::default() };
        let draws = sample_posterior(&f, &init, &opts).unwrap();
        let cov_true = prec.try_inverse().unwrap();
        let diff = draws.covariance() - &cov_true;
        let rel = diff.norm() / cov_true.norm();
        assert!(rel < 0.15, "relative Frobenius error {rel}");
    }

    #[test]
    fn deterministic_given_seed() {
        let (mean, prec, f) = two_d_target();
        let init = gaussian_fit(mean, prec);
        let opts = SamplerOptions { n_draws: 500, seed: 4, ..Default::default() };
        let a = sample_posterior(&f, &init, &opts).unwrap();
        let b = sample_posterior(&f, &init, &opts).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn rejects_unconverged_init() {
        let (mean, prec, f) = two_d_target();
        let mut init = gaussian_fit(mean, prec);
        init.converged = false;
        assert!(sample_posterior(&f, &init, &SamplerOptions::default()).is_err());
    }
}
