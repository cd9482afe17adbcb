//! Penalised H-score minimisation (the H-posterior mode), general
//! Bayesian fitting, posterior sampling and sandwich calibration.
//!
//! Optimisation runs in unconstrained coordinates (log transforms for
//! positive parameters) with multi-start BFGS; the reported Hessian is
//! taken afterwards in the original coordinates by central differences,
//! which is what the Laplace approximation needs.

pub mod fd;
pub mod optim;

mod asymptotic;
mod sampler;
mod sandwich;

pub use asymptotic::{asymptotic_mse, AsymptoticMse, ContaminationSpec};
pub use sampler::{sample_posterior, Draws, SamplerOptions};
pub use sandwich::{calibrate_posterior, sandwich, SandwichMatrices};

use crate::error::{Error, Result};
use crate::models::{Model, ParamLayout};
use crate::priors::PriorSpec;
use crate::DataSet;
use fd::fd_hessian;
use nalgebra::DMatrix;
use optim::{bfgs, BfgsOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveKind {
    /// Penalised Hyvarinen score: `sum_i H(y_i) - log pi(eta)`.
    HScore,
    /// Penalised loss (general Bayes): `sum_i l(y_i) - log pi(theta)`.
    Loss,
}

/// Negative log H-posterior (or general-Bayes posterior) over the full
/// original parameter vector.
pub struct Objective<'a> {
    pub model: &'a dyn Model,
    pub prior: &'a PriorSpec,
    pub data: &'a DataSet,
    pub layout: ParamLayout,
    pub kind: ObjectiveKind,
}

impl<'a> Objective<'a> {
    pub fn new(
        model: &'a dyn Model,
        prior: &'a PriorSpec,
        data: &'a DataSet,
        kind: ObjectiveKind,
    ) -> Result<Self> {
        let layout = model.layout(data);
        prior.validate(&layout)?;
        Ok(Objective { model, prior, data, layout, kind })
    }

    /// Objective value; infeasible parameters map to `+inf`.
    pub fn value(&self, params: &[f64]) -> f64 {
        if self.model.check(params, self.data).is_err() {
            return f64::INFINITY;
        }
        let lp = self.prior.log_density_truncated(self.model, &self.layout, params, self.data);
        if lp == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        let fit = match self.kind {
            ObjectiveKind::HScore => self.model.total_hscore_value(params, self.data),
            ObjectiveKind::Loss => self.model.total_loss(params, self.data),
        };
        if fit.is_finite() {
            fit - lp
        } else {
            f64::INFINITY
        }
    }

    /// Smooth continuation past support boundaries, for finite-difference
    /// Hessians at near-boundary modes: truncation indicators are dropped
    /// and the Tukey score continues polynomially through `nu2 = 0`.
    pub fn value_extended(&self, params: &[f64]) -> f64 {
        let lp = self.prior.log_density_extended(&self.layout, params);
        let fit = match self.kind {
            ObjectiveKind::HScore => (0..self.data.n())
                .map(|i| self.model.hscore_extended_i(params, self.data, i))
                .sum(),
            ObjectiveKind::Loss => self.model.total_loss(params, self.data),
        };
        fit - lp
    }

    /// The objective as a function of the free (learned) coordinates in
    /// original scale, e.g. for posterior sampling.
    pub fn free_fn<'b>(&'b self, map: &'b FreeMap) -> impl Fn(&[f64]) -> f64 + 'b {
        move |free: &[f64]| self.value(&map.full_from_free(free))
    }

    pub fn free_map(&self) -> FreeMap {
        FreeMap::build(&self.layout, self.prior)
    }
}

/// Bookkeeping between the full parameter vector, the free (learned)
/// subvector, and the unconstrained optimisation coordinates.
#[derive(Debug, Clone)]
pub struct FreeMap {
    pub full_dim: usize,
    pub free_idx: Vec<usize>,
    pub log_scale: Vec<bool>,
    pub positive: Vec<bool>,
    pub zero_boundary: Vec<bool>,
    pub fixed: Vec<(usize, f64)>,
}

impl FreeMap {
    pub fn build(layout: &ParamLayout, prior: &PriorSpec) -> Self {
        let coords = layout.coords();
        let fixed = prior.fixed_coords(layout);
        let is_fixed = |i: usize| fixed.iter().any(|(k, _)| *k == i);
        let mut free_idx = Vec::new();
        let mut log_scale = Vec::new();
        let mut positive = Vec::new();
        let mut zero_boundary = Vec::new();
        for (i, b) in coords.iter().enumerate() {
            if is_fixed(i) {
                continue;
            }
            free_idx.push(i);
            log_scale.push(b.positive);
            positive.push(b.positive);
            zero_boundary.push(b.zero_boundary);
        }
        FreeMap { full_dim: coords.len(), free_idx, log_scale, positive, zero_boundary, fixed }
    }

    pub fn d(&self) -> usize {
        self.free_idx.len()
    }

    pub fn free_values(&self, full: &[f64]) -> Vec<f64> {
        self.free_idx.iter().map(|&i| full[i]).collect()
    }

    pub fn full_from_free(&self, free: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.full_dim];
        for (k, &i) in self.free_idx.iter().enumerate() {
            full[i] = free[k];
        }
        for (i, v) in &self.fixed {
            full[*i] = *v;
        }
        full
    }

    pub fn to_unconstrained(&self, full: &[f64]) -> Vec<f64> {
        self.free_idx
            .iter()
            .zip(&self.log_scale)
            .map(|(&i, &log)| if log { full[i].max(1e-300).ln() } else { full[i] })
            .collect()
    }

    pub fn to_full(&self, z: &[f64]) -> Vec<f64> {
        let free: Vec<f64> = z
            .iter()
            .zip(&self.log_scale)
            .map(|(&v, &log)| if log { v.exp() } else { v })
            .collect();
        self.full_from_free(&free)
    }

    fn without(&self, coord: usize, value: f64) -> FreeMap {
        let mut m = self.clone();
        let pos = m.free_idx.iter().position(|&i| i == coord).expect("coordinate is free");
        m.free_idx.remove(pos);
        m.log_scale.remove(pos);
        m.positive.remove(pos);
        m.zero_boundary.remove(pos);
        m.fixed.push((coord, value));
        m
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Number of perturbed restarts added to the moment-based start.
    pub n_restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Probe the `nu2 = 0` (Gaussian-submodel) boundary and keep the
    /// better objective.
    pub boundary_probe: bool,
    /// User-supplied starts in full original coordinates.
    pub inits: Option<Vec<Vec<f64>>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { n_restarts: 3, max_iter: 300, seed: 0, boundary_probe: true, inits: None }
    }
}

/// Mode, curvature and diagnostics of a penalised fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model_name: String,
    /// Full parameter vector at the mode, original coordinates.
    pub mode: Vec<f64>,
    /// Indices of the learned coordinates within `mode`.
    pub free_idx: Vec<usize>,
    /// Penalised objective at the mode.
    pub objective: f64,
    /// Hessian of the objective over the learned coordinates, original
    /// scale, symmetrised.
    pub hessian: DMatrix<f64>,
    /// Relative max asymmetry of the raw Hessian before symmetrisation.
    pub hessian_asym: f64,
    pub converged: bool,
    pub n_restarts_used: usize,
    /// Gradient norm in the optimisation coordinates at the mode.
    pub gradient_norm: f64,
    /// Mode sits on (or within a Hessian step of) a support boundary.
    pub near_boundary: bool,
}

impl FitResult {
    pub fn d(&self) -> usize {
        self.free_idx.len()
    }

    pub fn free_mode(&self) -> Vec<f64> {
        self.free_idx.iter().map(|&i| self.mode[i]).collect()
    }

    pub fn coord(&self, layout: &ParamLayout, name: &str) -> Option<f64> {
        layout.range_of(name).map(|r| self.mode[r.start])
    }
}

/// Mode of the H-posterior: minimises `sum_i H(y_i; f(.; eta)) - log
/// pi(eta)` over the learned coordinates.
pub fn fit_hposterior(
    model: &dyn Model,
    prior: &PriorSpec,
    data: &DataSet,
    opts: &FitOptions,
) -> Result<FitResult> {
    let obj = Objective::new(model, prior, data, ObjectiveKind::HScore)?;
    fit_objective(&obj, opts)
}

/// General Bayesian fit: minimises `sum_i l(y_i; theta, kappa) - log
/// pi(theta | kappa)` with the hyperparameters pinned.
pub fn fit_general_bayes(
    model: &dyn Model,
    prior: &PriorSpec,
    data: &DataSet,
    opts: &FitOptions,
) -> Result<FitResult> {
    let obj = Objective::new(model, prior, data, ObjectiveKind::Loss)?;
    let fixed = prior.fixed_coords(&obj.layout);
    let coords = obj.layout.coords();
    for (i, b) in coords.iter().enumerate() {
        if b.hyper && !fixed.iter().any(|(k, _)| *k == i) {
            return Err(Error::InvalidArgument(format!(
                "general Bayes requires hyperparameter '{}' to be pinned",
                b.name
            )));
        }
    }
    fit_objective(&obj, opts)
}

pub fn fit_objective(obj: &Objective, opts: &FitOptions) -> Result<FitResult> {
    let map = obj.free_map();
    if map.d() == 0 {
        return Err(Error::InvalidArgument("no learned coordinates".into()));
    }
    let inits = build_inits(obj, &map, opts);
    let feasible: Vec<Vec<f64>> =
        inits.into_iter().filter(|x| obj.value(x).is_finite()).collect();
    if feasible.is_empty() {
        return Err(Error::InfeasibleStart);
    }
    let n_restarts_used = feasible.len();

    let bopts = BfgsOptions { max_iter: opts.max_iter, ..Default::default() };
    let best = run_multistart(obj, &map, &feasible, &bopts);

    // boundary probe: refit with each zero-boundary coordinate pinned at 0
    let mut best = best;
    if opts.boundary_probe {
        let zb: Vec<usize> = map
            .free_idx
            .iter()
            .zip(&map.zero_boundary)
            .filter(|(_, &z)| z)
            .map(|(&i, _)| i)
            .collect();
        for coord in zb {
            let sub = map.without(coord, 0.0);
            let sub_inits: Vec<Vec<f64>> = feasible
                .iter()
                .map(|x| {
                    let mut x = x.clone();
                    x[coord] = 0.0;
                    x
                })
                .filter(|x| obj.value(x).is_finite())
                .collect();
            if sub_inits.is_empty() {
                continue;
            }
            let probe = run_multistart(obj, &sub, &sub_inits, &bopts);
            // also snap interior solutions that collapsed onto the boundary
            let snap = best.mode[coord] < 1e-8;
            if probe.objective <= best.objective + 1e-9 * (1.0 + best.objective.abs()) || snap {
                if probe.objective.is_finite()
                    && (probe.objective < best.objective || snap)
                {
                    best = MultistartOutcome {
                        mode: probe.mode,
                        objective: probe.objective,
                        converged: probe.converged,
                        gradient_norm: probe.gradient_norm,
                    };
                }
            }
        }
    }

    // near-boundary detection in the learned coordinates
    let free_vals = map.free_values(&best.mode);
    let mut near_boundary = false;
    for (k, &v) in free_vals.iter().enumerate() {
        if map.positive[k] && v < 2.5e-4 {
            near_boundary = true;
        }
    }
    if obj.prior.truncate_breakdown && obj.model.name() == "tukey" {
        let tp = crate::models::TukeyParams::from_slice(&best.mode);
        let margin = obj.data.n() as f64 / 2.0 - obj.data.p() as f64;
        let lhs = crate::models::breakdown_lhs(&tp.beta, tp.sigma2, tp.nu2, obj.data);
        if margin - lhs < 1e-2 * margin.max(1.0) {
            near_boundary = true;
        }
    }

    let hess_fn = |free: &[f64]| {
        let full = map.full_from_free(free);
        if near_boundary {
            obj.value_extended(&full)
        } else {
            obj.value(&full)
        }
    };
    let (hessian, hessian_asym) = fd_hessian(&hess_fn, &free_vals, &map.positive);

    Ok(FitResult {
        model_name: obj.model.name().to_string(),
        mode: best.mode,
        free_idx: map.free_idx.clone(),
        objective: best.objective,
        hessian,
        hessian_asym,
        converged: best.converged,
        n_restarts_used,
        gradient_norm: best.gradient_norm,
        near_boundary,
    })
}

struct MultistartOutcome {
    mode: Vec<f64>,
    objective: f64,
    converged: bool,
    gradient_norm: f64,
}

fn run_multistart(
    obj: &Objective,
    map: &FreeMap,
    inits: &[Vec<f64>],
    bopts: &BfgsOptions,
) -> MultistartOutcome {
    let f = |z: &[f64]| obj.value(&map.to_full(z));
    let mut best: Option<MultistartOutcome> = None;
    for init in inits {
        let z0 = map.to_unconstrained(init);
        let out = bfgs(&f, &z0, bopts);
        let cand = MultistartOutcome {
            mode: map.to_full(&out.x),
            objective: out.f,
            converged: out.converged,
            gradient_norm: out.grad_norm,
        };
        best = Some(match best {
            None => cand,
            Some(b) => {
                // prefer converged fits, then the lower objective
                let better = (cand.converged, -cand.objective) > (b.converged, -b.objective);
                if better {
                    cand
                } else {
                    b
                }
            }
        });
    }
    best.expect("at least one init")
}

fn build_inits(obj: &Objective, map: &FreeMap, opts: &FitOptions) -> Vec<Vec<f64>> {
    let apply_fixed = |mut x: Vec<f64>| {
        for (i, v) in &map.fixed {
            x[*i] = *v;
        }
        x
    };
    if let Some(user) = &opts.inits {
        return user.iter().cloned().map(apply_fixed).collect();
    }
    let base = apply_fixed(obj.model.moment_init(obj.data));
    let base = repair_feasibility(obj, base);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut inits = vec![base.clone()];
    let coords = obj.layout.coords();
    for _ in 0..opts.n_restarts {
        let mut x = base.clone();
        for (i, b) in coords.iter().enumerate() {
            let xi: f64 = StandardNormal.sample(&mut rng);
            if map.fixed.iter().any(|(k, _)| *k == i) {
                continue;
            }
            if b.positive {
                x[i] *= (0.25 * xi).exp();
            } else {
                x[i] += 0.5 * x[i].abs().max(0.5) * xi;
            }
        }
        inits.push(repair_feasibility(obj, apply_fixed(x)));
    }
    inits
}

/// Inflate the residual variance until the start satisfies the breakdown
/// truncation; a feasible start always exists for large enough sigma2.
fn repair_feasibility(obj: &Objective, mut x: Vec<f64>) -> Vec<f64> {
    if obj.value(&x).is_finite() {
        return x;
    }
    if let Some(r) = obj.layout.range_of("sigma2") {
        for _ in 0..60 {
            x[r.start] *= 2.0;
            if obj.value(&x).is_finite() {
                return x;
            }
        }
    }
    x
}
