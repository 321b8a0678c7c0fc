//! Stepwise structure search guided by the relative log-likelihood gain,
//! with TIC bookkeeping and early stopping.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::design::{candidate_updates, Candidate, CoefficientSet, LinkSpec, ModelStructure, Param, SelectionMode, UpdateKind};
use crate::error::{Error, Result};
use crate::estimation::{fit, fit_joint, Dataset, FitOptions, FittedModel};
use crate::inference::{infer, infer_joint, HacOptions, InferenceBundle};

pub const DEFAULT_PATIENCE: usize = 15;
pub const DEFAULT_MAX_STEPS: usize = 100;
pub const DEFAULT_PARSIMONY_TOLERANCE: f64 = 1e-3;

/// `(ℓ_new − ℓ_old)/(q_new − q_old)`.
pub fn relative_gain(l_new: f64, l_old: f64, q_new: usize, q_old: usize) -> Result<f64> {
    if q_new <= q_old {
        return Err(Error::Invalid(format!("relative gain needs q_new > q_old, got {q_new} and {q_old}")));
    }
    Ok((l_new - l_old) / (q_new - q_old) as f64)
}

/// `−ℓ + 2·tr(K̂ Î⁻¹)`.
pub fn tic(loglik: f64, bundle: &InferenceBundle) -> Result<f64> {
    Ok(-loglik + 2.0 * bundle.penalty_trace()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionOptions {
    pub mode: SelectionMode,
    pub patience: usize,
    pub max_steps: usize,
    pub hac: HacOptions,
    pub fit: FitOptions,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            mode: SelectionMode::PurelySeasonal,
            patience: DEFAULT_PATIENCE,
            max_steps: DEFAULT_MAX_STEPS,
            hac: HacOptions::default(),
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub step: usize,
    pub structure: ModelStructure,
    /// Summed over stations for a joint search.
    pub loglik: f64,
    pub coef_total: usize,
    pub tic: f64,
    /// `None` for the intercept-only starting model.
    pub updated_param: Option<Param>,
    pub update_kind: Option<UpdateKind>,
    /// Candidates proposed at this step (zero for the starting model).
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionPath {
    pub steps: Vec<SelectionStep>,
    pub best_tic_index: usize,
    /// Stopped by the patience rule rather than `max_steps` or exhaustion.
    pub stopped_early: bool,
    /// Fitted model(s) per step, one per station.
    pub models: Vec<Vec<FittedModel>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum FinalStrategy {
    TicOptimal,
    Parsimonious { tolerance: f64 },
}

impl Default for FinalStrategy {
    fn default() -> Self {
        FinalStrategy::Parsimonious { tolerance: DEFAULT_PARSIMONY_TOLERANCE }
    }
}

/// Index of the designated final step.
pub fn select_final(path: &SelectionPath, strategy: FinalStrategy) -> usize {
    match strategy {
        FinalStrategy::TicOptimal => path.best_tic_index,
        FinalStrategy::Parsimonious { tolerance } => {
            let best = path.steps[path.best_tic_index].tic;
            let bound = best + tolerance * best.abs();
            path.steps.iter().position(|s| s.tic <= bound).unwrap_or(path.best_tic_index)
        }
    }
}

fn fit_all(
    datasets: &[Dataset],
    structure: &ModelStructure,
    init: Option<&[CoefficientSet]>,
    opts: &FitOptions,
) -> Result<Vec<FittedModel>> {
    let links = LinkSpec::default();
    if datasets.len() == 1 {
        Ok(vec![fit(&datasets[0], structure, &links, init.map(|c| &c[0]), opts)?])
    } else {
        fit_joint(datasets, structure, &links, init, opts)
    }
}

fn bundle_for(models: &[FittedModel], datasets: &[Dataset], hac: &HacOptions) -> Result<InferenceBundle> {
    if models.len() == 1 {
        infer(&models[0], &datasets[0], hac)
    } else {
        infer_joint(models, datasets, hac)
    }
}

/// Inference bundle of one step of a path.
pub fn step_bundle(path: &SelectionPath, index: usize, datasets: &[Dataset], hac: &HacOptions) -> Result<InferenceBundle> {
    bundle_for(&path.models[index], datasets, hac)
}

struct Scored {
    candidate: Candidate,
    gain: f64,
    added: usize,
    models: Vec<FittedModel>,
}

/// Larger gain first; ties go to fewer added coefficients, then μ < σ < ν,
/// then the lower frequency.
fn preference(a: &Scored, b: &Scored) -> Ordering {
    b.gain
        .total_cmp(&a.gain)
        .then(a.added.cmp(&b.added))
        .then(a.candidate.param.cmp(&b.candidate.param))
        .then(a.candidate.frequency().cmp(&b.candidate.frequency()))
}

/// Runs the stepwise search from the intercept-only structure.
///
/// With several datasets the structure is shared and the objective summed.
pub fn stepwise_select(datasets: &[Dataset], opts: &SelectionOptions) -> Result<SelectionPath> {
    if datasets.is_empty() {
        return Err(Error::InsufficientData("no datasets to select on".into()));
    }
    opts.hac.validate()?;
    let candidate_opts = FitOptions { polish: false, ..opts.fit };

    let base = ModelStructure::base();
    let mut current = fit_all(datasets, &base, None, &opts.fit)?;
    let total_ll = |ms: &[FittedModel]| ms.iter().map(|m| m.loglik).sum::<f64>();
    let q_of = |s: &ModelStructure| s.total_coefs() * datasets.len();

    let tic0 = tic(total_ll(&current), &bundle_for(&current, datasets, &opts.hac)?)?;
    let mut steps = vec![SelectionStep {
        step: 0,
        structure: base,
        loglik: total_ll(&current),
        coef_total: q_of(&base),
        tic: tic0,
        updated_param: None,
        update_kind: None,
        candidates: 0,
    }];
    let mut models = vec![current.clone()];
    let mut best = (0, tic0);
    let mut since_best = 0;
    let mut stopped_early = false;

    while steps.len() <= opts.max_steps {
        let structure = current[0].structure;
        let candidates = candidate_updates(&structure, opts.mode);
        let l_old = total_ll(&current);
        let mut scored = Vec::with_capacity(candidates.len());
        for cand in &candidates {
            let init: Vec<CoefficientSet> = current
                .iter()
                .map(|m| m.coeffs.embed_into(&cand.structure))
                .collect::<Result<_>>()?;
            match fit_all(datasets, &cand.structure, Some(&init), &candidate_opts) {
                Ok(ms) if ms.iter().all(|m| m.converged) => {
                    let gain = relative_gain(total_ll(&ms), l_old, q_of(&cand.structure), q_of(&structure))?;
                    scored.push(Scored { candidate: *cand, gain, added: q_of(&cand.structure) - q_of(&structure), models: ms });
                }
                Ok(_) => log::warn!("candidate {} did not converge; skipped", cand.structure),
                Err(e) => log::warn!("candidate {} failed: {e}; skipped", cand.structure),
            }
        }
        let Some(chosen) = scored.into_iter().min_by(preference) else {
            log::warn!("no viable candidate after {}; stopping", structure);
            break;
        };
        let init: Vec<CoefficientSet> = chosen.models.iter().map(|m| m.coeffs.clone()).collect();
        current = match fit_all(datasets, &chosen.candidate.structure, Some(&init), &opts.fit) {
            Ok(ms) => ms,
            Err(_) => chosen.models,
        };
        let ll = total_ll(&current);
        let t = tic(ll, &bundle_for(&current, datasets, &opts.hac)?)?;
        let index = steps.len();
        log::info!("step {index}: {} loglik {ll:.3} tic {t:.3}", chosen.candidate.structure);
        steps.push(SelectionStep {
            step: index,
            structure: chosen.candidate.structure,
            loglik: ll,
            coef_total: q_of(&chosen.candidate.structure),
            tic: t,
            updated_param: Some(chosen.candidate.param),
            update_kind: Some(chosen.candidate.kind),
            candidates: candidates.len(),
        });
        models.push(current.clone());
        if t < best.1 {
            best = (index, t);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.patience.max(1) {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(SelectionPath { steps, best_tic_index: best.0, stopped_early, models })
}
