//! Laplace-approximated integrated H-scores, H-Bayes factors (local and
//! non-local variants), posterior model probabilities, the BIC-type
//! criterion and the SMIC comparator.

use crate::error::{Error, Result};
use crate::inference::{fd::fd_gradient, FitResult};
use crate::models::Model;
use crate::priors::{nlp_penalty, NlpSpec};
use crate::score::log_sum_exp;
use crate::DataSet;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, Copy, Default)]
pub struct EvidenceOptions {
    /// Accept fits that stalled without meeting the gradient tolerance
    /// (used by grid scans where cells may sit on the breakdown
    /// constraint); callers get a best-effort evidence value.
    pub allow_unconverged: bool,
}

/// `log` determinant of the Hessian through Cholesky, with the spec'd
/// regularisation `lambda = 1e-8 tr(A)/d` on failure. Near-boundary modes
/// may escalate the ridge (the Laplace assumptions can fail there), which
/// is reported back as `regularised = true`.
fn log_det_regularized(a: &DMatrix<f64>, escalate: bool) -> Result<(f64, bool)> {
    let d = a.nrows();
    let chol = |m: &DMatrix<f64>| -> Option<f64> {
        m.clone().cholesky().map(|c| {
            let l = c.l();
            2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>()
        })
    };
    if let Some(v) = chol(a) {
        return Ok((v, false));
    }
    let trace: f64 = (0..d).map(|i| a[(i, i)].abs()).sum();
    let mut lambda = 1e-8 * trace.max(1e-300) / d as f64;
    let max_tries = if escalate { 14 } else { 1 };
    for _ in 0..max_tries {
        let m = a + DMatrix::identity(d, d) * lambda;
        if let Some(v) = chol(&m) {
            return Ok((v, true));
        }
        lambda *= 10.0;
    }
    Err(Error::EvidenceUndefined(
        "Hessian is not positive definite beyond regularisation".into(),
    ))
}

/// Laplace approximation to the log integrated H-score:
///
/// `(d/2) log 2pi + log pi(mode) - sum_i H_i(mode) - 1/2 log |A(mode)|`
///
/// where the first two data terms are `-objective` of the fit.
pub fn laplace_log_evidence(fit: &FitResult, opts: &EvidenceOptions) -> Result<f64> {
    if !fit.converged && !opts.allow_unconverged {
        return Err(Error::EvidenceUndefined(format!(
            "fit did not converge (gradient norm {})",
            fit.gradient_norm
        )));
    }
    if !fit.objective.is_finite() {
        return Err(Error::EvidenceUndefined("objective non-finite at the mode".into()));
    }
    let (log_det, _) = log_det_regularized(&fit.hessian, fit.near_boundary)?;
    let d = fit.d() as f64;
    Ok(0.5 * d * LN_2PI - fit.objective - 0.5 * log_det)
}

/// `B_kl = H_k / H_l` from log evidences.
pub fn hbayes_factor(log_evidence_k: f64, log_evidence_l: f64) -> f64 {
    (log_evidence_k - log_evidence_l).exp()
}

/// Posterior model probabilities from log evidences via log-sum-exp;
/// uniform prior weights by default.
pub fn posterior_model_probs(
    log_evidences: &[f64],
    prior_weights: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let m = log_evidences.len();
    if m == 0 {
        return Err(Error::InvalidArgument("no models".into()));
    }
    if log_evidences.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::InvalidArgument("log evidences must not be NaN or +inf".into()));
    }
    let w: Vec<f64> = match prior_weights {
        Some(w) if w.len() == m && w.iter().all(|v| *v > 0.0) => w.to_vec(),
        Some(_) => return Err(Error::InvalidArgument("bad prior weights".into())),
        None => vec![1.0 / m as f64; m],
    };
    let logs: Vec<f64> = log_evidences.iter().zip(&w).map(|(le, wi)| le + wi.ln()).collect();
    let z = log_sum_exp(&logs);
    if !z.is_finite() {
        return Err(Error::EvidenceUndefined("all model evidences vanish".into()));
    }
    let mut probs: Vec<f64> = logs.iter().map(|l| (l - z).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

/// Non-local-prior adjusted log H-Bayes factor for a nested pair: model
/// `l` is fit under the LOCAL prior and the adjustment divides by the
/// penalty `d(.)` at the local-fit hyperparameter mode:
///
/// `log B = log H_k - log H_l^LP - log d(|kappa_l - kappa_null|)`.
///
/// A boundary mode (`kappa_l = kappa_null` exactly) gives `+inf` in
/// favour of the smaller model.
pub fn nlp_adjusted_log_bf(
    log_evidence_k: f64,
    log_evidence_l_lp: f64,
    kappa_l_mode: f64,
    kappa_null: f64,
    nlp: &NlpSpec,
) -> f64 {
    let dist = (kappa_l_mode - kappa_null).abs();
    if dist == 0.0 {
        return f64::INFINITY;
    }
    log_evidence_k - log_evidence_l_lp - nlp_penalty(nlp, dist)
}

/// BIC-type criterion: `-sum_i H_i(mode) - (d/2) log n + log pi(mode)`;
/// larger is better.
pub fn bic_type_score(fit: &FitResult, n: usize) -> f64 {
    -fit.objective - 0.5 * fit.d() as f64 * (n as f64).ln()
}

/// Score-matching information criterion at the unpenalised H-score
/// minimiser: `sum_i H_i + tr(I A^{-1})` with `I = sum_i gradH_i gradH_i'`
/// and `A` the Hessian of the total score; smaller is better.
pub fn smic(model: &dyn Model, data: &DataSet, fit_unpenalized: &FitResult) -> Result<f64> {
    let a_inv = fit_unpenalized
        .hessian
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SmicUndefined("singular H-score Hessian".into()))?;
    let free_idx = &fit_unpenalized.free_idx;
    let d = free_idx.len();
    let mode = fit_unpenalized.free_mode();

    let mut i_mat = DMatrix::zeros(d, d);
    for i in 0..data.n() {
        let h_i = |free: &[f64]| {
            let mut full = fit_unpenalized.mode.clone();
            for (k, &idx) in free_idx.iter().enumerate() {
                full[idx] = free[k];
            }
            model.hscore_extended_i(&full, data, i)
        };
        let g = DVector::from_vec(fd_gradient(&h_i, &mode, 1e-6));
        i_mat += &g * g.transpose();
    }
    let trace = (i_mat * a_inv).trace();
    if !trace.is_finite() {
        return Err(Error::SmicUndefined("non-finite trace correction".into()));
    }
    Ok(fit_unpenalized.objective + trace)
}

/// Per-model entry of a comparison report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEvidence {
    pub name: String,
    pub log_evidence: f64,
    pub d: usize,
    pub mode: Vec<f64>,
    pub converged: bool,
    pub near_boundary: bool,
    /// Evidence includes the non-local-prior adjustment term.
    pub nlp_adjusted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bic_type: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub models: Vec<ModelEvidence>,
    /// `log_bf[k][l] = log B_kl`.
    pub log_bayes_factors: Vec<Vec<f64>>,
    pub posterior_probs: Vec<f64>,
    pub prior_weights: Vec<f64>,
    pub selected: String,
    pub nlp_adjusted: bool,
}

/// Assemble the report: pairwise log H-Bayes factors, posterior model
/// probabilities, and the selected model (ties break toward smaller
/// dimension).
pub fn build_report(
    models: Vec<ModelEvidence>,
    prior_weights: Option<Vec<f64>>,
) -> Result<ComparisonReport> {
    if models.len() < 2 {
        return Err(Error::InvalidArgument("model comparison needs at least two models".into()));
    }
    let m = models.len();
    let w = prior_weights.unwrap_or_else(|| vec![1.0 / m as f64; m]);
    let log_evs: Vec<f64> = models.iter().map(|e| e.log_evidence).collect();
    let probs = posterior_model_probs(&log_evs, Some(&w))?;

    let mut log_bf = vec![vec![0.0; m]; m];
    for k in 0..m {
        for l in 0..m {
            log_bf[k][l] = log_evs[k] - log_evs[l];
        }
    }
    let mut best = 0usize;
    for k in 1..m {
        let better = probs[k] > probs[best] + 1e-12
            || ((probs[k] - probs[best]).abs() <= 1e-12 && models[k].d < models[best].d);
        if better {
            best = k;
        }
    }
    let selected = models[best].name.clone();
    let nlp_adjusted = models.iter().any(|e| e.nlp_adjusted);
    Ok(ComparisonReport {
        models,
        log_bayes_factors: log_bf,
        posterior_probs: probs,
        prior_weights: w,
        selected,
        nlp_adjusted,
    })
}
