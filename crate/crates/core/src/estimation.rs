//! Working-independence maximum likelihood for single stations and for
//! several stations sharing one model structure.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{fill_row, CoefficientSet, LinkSpec, ModelStructure, Param, TimeGrid, TimeScale};
use crate::distribution::{log_density_eta, log_density_eta_score, DistParams};
use crate::error::{Error, Result};
use crate::optim::{minimize, LbfgsOptions, Termination};

/// Minimum number of observations accepted by [`initialize`].
pub const MIN_OBSERVATIONS: usize = 10;

/// `|η|` beyond which `exp(η)` is not a usable location or scale.
const MAX_LOG_PREDICTOR: f64 = 700.0;

/// Relative finite-difference step for Hessians.
pub const FD_STEP: f64 = 1e-5;

const POLISH_STEPS: usize = 3;

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Observations of one station.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub station: String,
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(station: impl Into<String>, grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::LayoutMismatch { expected: grid.len(), actual: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!(
                "value {} at t={} is not positive and finite",
                values[i],
                grid.timestamps()[i]
            )));
        }
        Ok(Self { station: station.into(), grid, values })
    }

    /// Builds the grid from timestamps with a trend scale spanning them.
    pub fn from_series(station: impl Into<String>, timestamps: Vec<f64>, values: Vec<f64>, period: f64) -> Result<Self> {
        Self::new(station, TimeGrid::new(timestamps, period)?, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn timestamps(&self) -> &[f64] {
        self.grid.timestamps()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same observations under another trend standardization.
    pub fn with_scale(&self, scale: TimeScale) -> Result<Self> {
        Ok(Self {
            station: self.station.clone(),
            grid: TimeGrid::with_scale(self.grid.timestamps().to_vec(), scale)?,
            values: self.values.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub rel_tol: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub memory: usize,
    /// Finish with Newton steps on the finite-difference Hessian.
    pub polish: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        let o = LbfgsOptions::default();
        Self { rel_tol: o.rel_tol, grad_tol: o.grad_tol, max_iter: o.max_iter, memory: o.memory, polish: true }
    }
}

impl FitOptions {
    fn lbfgs(&self) -> LbfgsOptions {
        LbfgsOptions { rel_tol: self.rel_tol, grad_tol: self.grad_tol, max_iter: self.max_iter, memory: self.memory }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub structure: ModelStructure,
    pub links: LinkSpec,
    pub coeffs: CoefficientSet,
    pub loglik: f64,
    pub time_scale: TimeScale,
    pub n_obs: usize,
    pub converged: bool,
    pub iterations: usize,
    pub grad_sup_norm: f64,
}

impl FittedModel {
    pub fn predict(&self, t: f64) -> Result<DistParams> {
        crate::design::predict_params(&self.coeffs, &self.structure, &self.links, t, &self.time_scale)
    }

    pub fn coef_total(&self) -> usize {
        self.structure.total_coefs()
    }
}

fn check_links(links: &LinkSpec) -> Result<()> {
    if *links != LinkSpec::default() {
        return Err(Error::Invalid("only log links for mu and sigma and identity for nu are supported".into()));
    }
    Ok(())
}

/// Covariate rows of one dataset under one structure, stored row-major.
pub(crate) struct Design {
    structure: ModelStructure,
    ks: [usize; 3],
    rows: [Vec<f64>; 3],
    ln_x: Vec<f64>,
    timestamps: Vec<f64>,
}

/// Outcome of evaluating the objective at a point.
enum Eval {
    Ok(f64),
    /// Predictor out of range at this observation index.
    OutOfDomain(usize),
}

impl Design {
    pub(crate) fn new(data: &Dataset, structure: &ModelStructure) -> Self {
        let scale = data.grid().scale();
        let ks = Param::ALL.map(|p| structure.coef_count(p));
        let rows = Param::ALL.map(|p| {
            let shape = structure.shape(p);
            let mut out = Vec::with_capacity(data.len() * ks[p.index()]);
            for &t in data.timestamps() {
                fill_row(shape, t, scale, &mut out);
            }
            out
        });
        Self {
            structure: *structure,
            ks,
            rows,
            ln_x: data.values().iter().map(|v| v.ln()).collect(),
            timestamps: data.timestamps().to_vec(),
        }
    }

    pub(crate) fn n(&self) -> usize {
        self.ln_x.len()
    }

    pub(crate) fn q(&self) -> usize {
        self.ks.iter().sum()
    }

    #[inline]
    fn predictors(&self, i: usize, beta: &[f64]) -> [f64; 3] {
        let mut off = 0;
        let mut eta = [0.0; 3];
        for j in 0..3 {
            let k = self.ks[j];
            let row = &self.rows[j][i * k..(i + 1) * k];
            eta[j] = row.iter().zip(&beta[off..off + k]).map(|(a, b)| a * b).sum();
            off += k;
        }
        eta
    }

    #[inline]
    fn in_domain(eta: &[f64; 3]) -> bool {
        eta[0].abs() < MAX_LOG_PREDICTOR && eta[1].abs() < MAX_LOG_PREDICTOR && eta[2].is_finite()
    }

    fn loglik(&self, beta: &[f64]) -> Eval {
        let mut total = 0.0;
        for i in 0..self.n() {
            let eta = self.predictors(i, beta);
            if !Self::in_domain(&eta) {
                return Eval::OutOfDomain(i);
            }
            total += log_density_eta(self.ln_x[i], eta[0], eta[1], eta[2]);
        }
        Eval::Ok(total)
    }

    /// Log-likelihood and its gradient (gradient accumulated into `grad`).
    fn loglik_grad(&self, beta: &[f64], grad: &mut [f64]) -> Eval {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for i in 0..self.n() {
            let eta = self.predictors(i, beta);
            if !Self::in_domain(&eta) {
                return Eval::OutOfDomain(i);
            }
            let (ll, s) = log_density_eta_score(self.ln_x[i], eta[0], eta[1], eta[2]);
            total += ll;
            let mut off = 0;
            for j in 0..3 {
                let k = self.ks[j];
                let row = &self.rows[j][i * k..(i + 1) * k];
                for (g, a) in grad[off..off + k].iter_mut().zip(row) {
                    *g += s[j] * a;
                }
                off += k;
            }
        }
        Eval::Ok(total)
    }

    /// Per-observation scores, `n × q` row-major.
    pub(crate) fn scores(&self, beta: &[f64]) -> Result<Vec<f64>> {
        let q = self.q();
        let mut out = vec![0.0; self.n() * q];
        for i in 0..self.n() {
            let eta = self.predictors(i, beta);
            if !Self::in_domain(&eta) {
                return Err(self.domain_error(i));
            }
            let (_, s) = log_density_eta_score(self.ln_x[i], eta[0], eta[1], eta[2]);
            let dst = &mut out[i * q..(i + 1) * q];
            let mut off = 0;
            for j in 0..3 {
                let k = self.ks[j];
                let row = &self.rows[j][i * k..(i + 1) * k];
                for (d, a) in dst[off..off + k].iter_mut().zip(row) {
                    *d = s[j] * a;
                }
                off += k;
            }
        }
        Ok(out)
    }

    pub(crate) fn gradient(&self, beta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut g = vec![0.0; self.q()];
        match self.loglik_grad(beta, &mut g) {
            Eval::Ok(v) => Ok((v, g)),
            Eval::OutOfDomain(i) => Err(self.domain_error(i)),
        }
    }

    /// Hessian of the objective by central differences of the analytic
    /// gradient, step `1e-5·(1+|β_j|)`, symmetrized.
    pub(crate) fn hessian(&self, beta: &[f64]) -> Result<DMatrix<f64>> {
        let q = self.q();
        let mut h = DMatrix::zeros(q, q);
        let mut x = beta.to_vec();
        for j in 0..q {
            let step = FD_STEP * (1.0 + beta[j].abs());
            x[j] = beta[j] + step;
            let (_, gp) = self.gradient(&x)?;
            x[j] = beta[j] - step;
            let (_, gm) = self.gradient(&x)?;
            x[j] = beta[j];
            for i in 0..q {
                h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        Ok((&h + h.transpose()) * 0.5)
    }

    /// Newton steps on the finite-difference Hessian after the quasi-Newton
    /// phase. Returns the improved point, its value and gradient sup-norm.
    fn polish(&self, beta: Vec<f64>, value: f64, grad_tol: f64) -> (Vec<f64>, f64, f64) {
        let mut best = (beta, value);
        let mut gnorm = f64::INFINITY;
        for _ in 0..POLISH_STEPS {
            let Ok((_, g)) = self.gradient(&best.0) else { break };
            gnorm = sup_norm(&g);
            if gnorm < grad_tol {
                break;
            }
            let Ok(h) = self.hessian(&best.0) else { break };
            let Some(chol) = (-h).cholesky() else { break };
            let delta = chol.solve(&DVector::from_vec(g));
            let cand: Vec<f64> = best.0.iter().zip(delta.iter()).map(|(b, d)| b + d).collect();
            match self.loglik(&cand) {
                Eval::Ok(v) if v.is_finite() && v >= best.1 - 1e-12 * best.1.abs().max(1.0) => best = (cand, v),
                _ => break,
            }
        }
        if let Ok((_, g)) = self.gradient(&best.0) {
            gnorm = sup_norm(&g);
        }
        (best.0, best.1, gnorm)
    }

    fn domain_error(&self, i: usize) -> Error {
        Error::DomainAt {
            timestamp: self.timestamps[i],
            message: "predicted mu or sigma is zero or infinite".into(),
        }
    }

    fn check(&self, coeffs: &CoefficientSet) -> Result<()> {
        if coeffs.structure() != &self.structure {
            return Err(Error::LayoutMismatch { expected: self.q(), actual: coeffs.values().len() });
        }
        Ok(())
    }
}

/// `ℓ(β|X) = Σ_t ln f(X_t | θ_t)`.
pub fn objective(coeffs: &CoefficientSet, structure: &ModelStructure, links: &LinkSpec, data: &Dataset) -> Result<f64> {
    check_links(links)?;
    let design = Design::new(data, structure);
    design.check(coeffs)?;
    match design.loglik(coeffs.values()) {
        Eval::Ok(v) => Ok(v),
        Eval::OutOfDomain(i) => Err(design.domain_error(i)),
    }
}

pub fn objective_gradient(
    coeffs: &CoefficientSet,
    structure: &ModelStructure,
    links: &LinkSpec,
    data: &Dataset,
) -> Result<Vec<f64>> {
    check_links(links)?;
    let design = Design::new(data, structure);
    design.check(coeffs)?;
    Ok(design.gradient(coeffs.values())?.1)
}

/// Start at the moment-matched lognormal: intercepts from the mean and sd of
/// `ln X`, every other coefficient zero.
pub fn initialize(structure: &ModelStructure, links: &LinkSpec, data: &Dataset) -> Result<CoefficientSet> {
    check_links(links)?;
    let n = data.len();
    if n < MIN_OBSERVATIONS {
        return Err(Error::InsufficientData(format!(
            "{n} observations, at least {MIN_OBSERVATIONS} required"
        )));
    }
    let logs: Vec<f64> = data.values().iter().map(|v| v.ln()).collect();
    let mean = logs.iter().sum::<f64>() / n as f64;
    let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) {
        return Err(Error::InsufficientData("zero variance in log values".into()));
    }
    let mut c = CoefficientSet::zeros(*structure);
    c.block_mut(Param::Mu)[0] = mean;
    c.block_mut(Param::Sigma)[0] = 0.5 * var.ln();
    Ok(c)
}

struct Optimized {
    x: Vec<f64>,
    loglik: f64,
    iterations: usize,
    converged: bool,
    grad_sup_norm: f64,
    /// Log-likelihood at the start and at each accepted quasi-Newton step.
    #[cfg_attr(not(test), allow(dead_code))]
    trace: Vec<f64>,
}

fn run_optimizer(design: &Design, x0: Vec<f64>, opts: &FitOptions) -> Result<Optimized> {
    let r = minimize(
        |beta: &[f64], grad: &mut [f64]| -> Result<Option<f64>> {
            match design.loglik_grad(beta, grad) {
                Eval::Ok(v) => {
                    grad.iter_mut().for_each(|g| *g = -*g);
                    Ok(Some(-v))
                }
                Eval::OutOfDomain(_) => Ok(None),
            }
        },
        x0,
        &opts.lbfgs(),
    )?;
    if r.iterations == 0 && r.termination == Termination::LineSearchFailed && !r.value.is_finite() {
        // The start itself is infeasible; report where.
        return match design.loglik(&r.x) {
            Eval::OutOfDomain(i) => Err(design.domain_error(i)),
            Eval::Ok(_) => Err(Error::Domain("objective is not finite at the starting point".into())),
        };
    }
    let lbfgs_converged = r.converged();
    let trace = r.trace.iter().map(|v| -v).collect();
    let (x, value, gnorm) = if opts.polish {
        design.polish(r.x, -r.value, opts.grad_tol)
    } else {
        let g = r.grad_sup_norm();
        (r.x, -r.value, g)
    };
    let converged = lbfgs_converged || gnorm < opts.grad_tol;
    if !converged {
        log::warn!("fit stopped without convergence ({:?}) after {} iterations", r.termination, r.iterations);
    }
    Ok(Optimized { x, loglik: value, iterations: r.iterations, converged, grad_sup_norm: gnorm, trace })
}

/// Maximizes the objective from `init` (or [`initialize`]).
pub fn fit(
    data: &Dataset,
    structure: &ModelStructure,
    links: &LinkSpec,
    init: Option<&CoefficientSet>,
    opts: &FitOptions,
) -> Result<FittedModel> {
    let start = match init {
        Some(c) => {
            check_links(links)?;
            if c.structure() != structure {
                return Err(Error::LayoutMismatch { expected: structure.total_coefs(), actual: c.values().len() });
            }
            c.clone()
        }
        None => initialize(structure, links, data)?,
    };
    let design = Design::new(data, structure);
    let r = run_optimizer(&design, start.into_values(), opts)?;
    Ok(FittedModel {
        structure: *structure,
        links: *links,
        coeffs: CoefficientSet::new(*structure, r.x)?,
        loglik: r.loglik,
        time_scale: *data.grid().scale(),
        n_obs: data.len(),
        converged: r.converged,
        iterations: r.iterations,
        grad_sup_norm: r.grad_sup_norm,
    })
}

/// Stacked designs of several stations sharing one structure.
pub(crate) struct JointDesign {
    pub(crate) parts: Vec<Design>,
}

impl JointDesign {
    pub(crate) fn new(datasets: &[Dataset], structure: &ModelStructure) -> Self {
        Self { parts: datasets.iter().map(|d| Design::new(d, structure)).collect() }
    }

    fn q_each(&self) -> usize {
        self.parts[0].q()
    }

    fn loglik_grad(&self, beta: &[f64], grad: &mut [f64]) -> Option<f64> {
        let q = self.q_each();
        let mut total = 0.0;
        for (k, part) in self.parts.iter().enumerate() {
            match part.loglik_grad(&beta[k * q..(k + 1) * q], &mut grad[k * q..(k + 1) * q]) {
                Eval::Ok(v) => total += v,
                Eval::OutOfDomain(_) => return None,
            }
        }
        Some(total)
    }
}

/// Maximizes the summed objective of several stations sharing `structure`.
///
/// Returns one model per station, in input order.
pub fn fit_joint(
    datasets: &[Dataset],
    structure: &ModelStructure,
    links: &LinkSpec,
    init: Option<&[CoefficientSet]>,
    opts: &FitOptions,
) -> Result<Vec<FittedModel>> {
    if datasets.len() < 2 {
        return Err(Error::InsufficientData("joint fit needs at least two datasets".into()));
    }
    let starts: Vec<CoefficientSet> = match init {
        Some(cs) => {
            if cs.len() != datasets.len() {
                return Err(Error::LayoutMismatch { expected: datasets.len(), actual: cs.len() });
            }
            for c in cs {
                if c.structure() != structure {
                    return Err(Error::LayoutMismatch { expected: structure.total_coefs(), actual: c.values().len() });
                }
            }
            check_links(links)?;
            cs.to_vec()
        }
        None => datasets.iter().map(|d| initialize(structure, links, d)).collect::<Result<_>>()?,
    };
    let joint = JointDesign::new(datasets, structure);
    let q = joint.q_each();
    let x0: Vec<f64> = starts.into_iter().flat_map(CoefficientSet::into_values).collect();

    let r = minimize(
        |beta: &[f64], grad: &mut [f64]| -> Result<Option<f64>> {
            Ok(joint.loglik_grad(beta, grad).map(|v| {
                grad.iter_mut().for_each(|g| *g = -*g);
                -v
            }))
        },
        x0,
        &opts.lbfgs(),
    )?;
    if !r.value.is_finite() {
        for (k, part) in joint.parts.iter().enumerate() {
            if let Eval::OutOfDomain(i) = part.loglik(&r.x[k * q..(k + 1) * q]) {
                return Err(part.domain_error(i));
            }
        }
        return Err(Error::Domain("joint objective is not finite at the starting point".into()));
    }
    let mut out = Vec::with_capacity(datasets.len());
    for (k, (data, part)) in datasets.iter().zip(&joint.parts).enumerate() {
        let mut beta = r.x[k * q..(k + 1) * q].to_vec();
        if opts.polish {
            // The summed objective is separable, so Newton on the block-diagonal
            // Hessian is Newton on the joint problem.
            let (_, g) = part.gradient(&beta)?;
            let v = match part.loglik(&beta) {
                Eval::Ok(v) => v,
                Eval::OutOfDomain(i) => return Err(part.domain_error(i)),
            };
            if sup_norm(&g) >= opts.grad_tol {
                beta = part.polish(beta, v, opts.grad_tol).0;
            }
        }
        let (loglik, grad) = part.gradient(&beta)?;
        let converged = r.converged() || sup_norm(&grad) < opts.grad_tol;
        if !converged {
            log::warn!("joint fit of station {} stopped without convergence ({:?})", data.station, r.termination);
        }
        out.push(FittedModel {
            structure: *structure,
            links: *links,
            coeffs: CoefficientSet::new(*structure, beta)?,
            loglik,
            time_scale: *data.grid().scale(),
            n_obs: data.len(),
            converged,
            iterations: r.iterations,
            grad_sup_norm: sup_norm(&grad),
        });
    }
    Ok(out)
}
