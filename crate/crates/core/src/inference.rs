//! Sandwich covariance `Î⁻¹ K̂ Î⁻¹` with a kernel-weighted (HAC) score
//! covariance, confidence intervals and Wald tests.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::estimation::{Dataset, Design, FittedModel, JointDesign};
use crate::error::{Error, Result};
use crate::special::{gamma_q, norm_quantile};

pub const DEFAULT_BANDWIDTH: f64 = 31.0;

/// Condition number of `Î` above which a warning is logged.
const CONDITION_WARNING: f64 = 1e12;

/// Relative eigenvalue floor for the PSD repair of `K̂`.
const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    #[default]
    TukeyHanning,
    Bartlett,
}

impl Kernel {
    pub fn weight(self, lag: f64, bandwidth: f64) -> f64 {
        match self {
            Kernel::TukeyHanning => tukey_hanning_weight(lag, bandwidth),
            Kernel::Bartlett => {
                if lag > bandwidth {
                    0.0
                } else {
                    1.0 - lag / bandwidth
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::TukeyHanning => "tukey-hanning",
            Kernel::Bartlett => "bartlett",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tukey-hanning" => Ok(Kernel::TukeyHanning),
            "bartlett" => Ok(Kernel::Bartlett),
            other => Err(Error::Invalid(format!("unknown kernel '{other}'"))),
        }
    }
}

/// `(1 + cos(π·lag/b))/2` on `[0, b]`, zero beyond.
pub fn tukey_hanning_weight(lag: f64, bandwidth: f64) -> f64 {
    let lag = lag.abs();
    if lag > bandwidth {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * lag / bandwidth).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HacOptions {
    /// Kernel support in days.
    pub bandwidth: f64,
    pub kernel: Kernel,
}

impl Default for HacOptions {
    fn default() -> Self {
        Self { bandwidth: DEFAULT_BANDWIDTH, kernel: Kernel::TukeyHanning }
    }
}

impl HacOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::Invalid(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceBundle {
    /// Observed information `Î`.
    pub info: DMatrix<f64>,
    /// HAC score covariance `K̂`.
    pub score_cov: DMatrix<f64>,
    /// `Î⁻¹ K̂ Î⁻¹`.
    pub sandwich_cov: DMatrix<f64>,
    pub bandwidth: f64,
    pub kernel: Kernel,
}

impl InferenceBundle {
    pub fn from_parts(info: DMatrix<f64>, score_cov: DMatrix<f64>, hac: &HacOptions) -> Result<Self> {
        let sandwich_cov = sandwich(&info, &score_cov)?;
        Ok(Self { info, score_cov, sandwich_cov, bandwidth: hac.bandwidth, kernel: hac.kernel })
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.sandwich_cov.nrows()).map(|i| self.sandwich_cov[(i, i)].max(0.0).sqrt()).collect()
    }

    /// `tr(K̂ Î⁻¹)`.
    pub fn penalty_trace(&self) -> Result<f64> {
        trace_k_info_inv(&self.info, &self.score_cov)
    }

    /// Naive model-based covariance `Î⁻¹`.
    pub fn naive_cov(&self) -> Result<DMatrix<f64>> {
        let n = self.info.nrows();
        solve(&self.info, &DMatrix::identity(n, n)).map(|m| symmetrize(&m))
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Solves `A X = B`, trying Cholesky before LU.
fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    a.clone()
        .lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular("information matrix is not invertible".into()))
}

fn check_square(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() || a.shape() != b.shape() {
        return Err(Error::LayoutMismatch { expected: a.nrows(), actual: b.nrows() });
    }
    Ok(())
}

/// `Î⁻¹ K̂ Î⁻¹` via two solves; never forms `Î⁻¹` explicitly.
pub fn sandwich(info: &DMatrix<f64>, score_cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(info, score_cov)?;
    let left = solve(info, score_cov)?;
    let both = solve(info, &left.transpose())?;
    Ok(symmetrize(&both))
}

pub fn trace_k_info_inv(info: &DMatrix<f64>, score_cov: &DMatrix<f64>) -> Result<f64> {
    check_square(info, score_cov)?;
    Ok(solve(info, score_cov)?.trace())
}

/// Negative Hessian of the objective at the fitted coefficients.
pub fn observed_information(model: &FittedModel, data: &Dataset) -> Result<DMatrix<f64>> {
    let design = Design::new(&data.with_scale(model.time_scale)?, &model.structure);
    let info = -design.hessian(model.coeffs.values())?;
    warn_conditioning(&info);
    Ok(info)
}

fn warn_conditioning(info: &DMatrix<f64>) {
    let cond = condition_number(info);
    if cond > CONDITION_WARNING {
        log::warn!("information matrix is nearly singular (condition number {cond:.3e})");
    }
}

/// One observation's score, placed at `offset` in the full coefficient vector.
struct ScoreRow<'a> {
    t: f64,
    offset: usize,
    values: &'a [f64],
}

/// `Σ_{s,t} w(|t−s|)·u_s u_tᵀ` over rows sorted by time, in a `q_total`
/// dimensional space.
fn hac_rows(rows: &[ScoreRow<'_>], q_total: usize, hac: &HacOptions) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(q_total, q_total);
    let mut v = vec![0.0; q_total];
    let mut lo = 0;
    let mut hi = 0;
    for s in rows {
        while rows[lo].t < s.t - hac.bandwidth {
            lo += 1;
        }
        while hi < rows.len() && rows[hi].t <= s.t + hac.bandwidth {
            hi += 1;
        }
        v.iter_mut().for_each(|x| *x = 0.0);
        for r in &rows[lo..hi] {
            let w = hac.kernel.weight((r.t - s.t).abs(), hac.bandwidth);
            if w == 0.0 {
                continue;
            }
            for (dst, u) in v[r.offset..r.offset + r.values.len()].iter_mut().zip(r.values) {
                *dst += w * u;
            }
        }
        for (a, &ua) in s.values.iter().enumerate() {
            if ua == 0.0 {
                continue;
            }
            let i = s.offset + a;
            for (j, &vj) in v.iter().enumerate() {
                k[(i, j)] += ua * vj;
            }
        }
    }
    repair_psd(symmetrize(&k))
}

/// Raises eigenvalues below `1e-12·tr/q` to that floor.
fn repair_psd(k: DMatrix<f64>) -> DMatrix<f64> {
    let q = k.nrows();
    if q == 0 {
        return k;
    }
    let floor = EIGEN_FLOOR * k.trace().abs() / q as f64;
    let eig = k.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return k;
    }
    let lams = DVector::from_iterator(q, eig.eigenvalues.iter().map(|&l| l.max(floor)));
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&lams) * v.transpose()))
}

/// HAC covariance of per-observation scores (`n × q`, rows aligned with
/// non-decreasing `timestamps`). Lags are measured in days.
pub fn hac_score_covariance(scores: &DMatrix<f64>, timestamps: &[f64], hac: &HacOptions) -> Result<DMatrix<f64>> {
    hac.validate()?;
    if scores.nrows() != timestamps.len() {
        return Err(Error::LayoutMismatch { expected: timestamps.len(), actual: scores.nrows() });
    }
    if timestamps.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Invalid("timestamps must be non-decreasing".into()));
    }
    // Row-major copy so each score row is a contiguous slice.
    let q = scores.ncols();
    let flat: Vec<f64> = (0..scores.nrows()).flat_map(|i| scores.row(i).iter().copied().collect::<Vec<_>>()).collect();
    let rows: Vec<ScoreRow<'_>> = timestamps
        .iter()
        .enumerate()
        .map(|(i, &t)| ScoreRow { t, offset: 0, values: &flat[i * q..(i + 1) * q] })
        .collect();
    Ok(hac_rows(&rows, q, hac))
}

/// Per-observation scores of a fitted model, `n × q`.
pub fn score_matrix(model: &FittedModel, data: &Dataset) -> Result<DMatrix<f64>> {
    let design = Design::new(&data.with_scale(model.time_scale)?, &model.structure);
    let flat = design.scores(model.coeffs.values())?;
    Ok(DMatrix::from_row_slice(design.n(), design.q(), &flat))
}

/// Full inference bundle for a single-station fit.
pub fn infer(model: &FittedModel, data: &Dataset, hac: &HacOptions) -> Result<InferenceBundle> {
    hac.validate()?;
    let data = data.with_scale(model.time_scale)?;
    let design = Design::new(&data, &model.structure);
    let beta = model.coeffs.values();
    let info = -design.hessian(beta)?;
    warn_conditioning(&info);
    let flat = design.scores(beta)?;
    let q = design.q();
    let rows: Vec<ScoreRow<'_>> = data
        .timestamps()
        .iter()
        .enumerate()
        .map(|(i, &t)| ScoreRow { t, offset: 0, values: &flat[i * q..(i + 1) * q] })
        .collect();
    let k = hac_rows(&rows, q, hac);
    InferenceBundle::from_parts(info, k, hac)
}

/// Inference for a joint fit over the stacked coefficient vector.
///
/// `Î` is block diagonal; `K̂` includes between-station score products for
/// observations within the bandwidth of each other.
pub fn infer_joint(models: &[FittedModel], datasets: &[Dataset], hac: &HacOptions) -> Result<InferenceBundle> {
    hac.validate()?;
    if models.len() != datasets.len() || models.is_empty() {
        return Err(Error::LayoutMismatch { expected: datasets.len(), actual: models.len() });
    }
    let structure = models[0].structure;
    if models.iter().any(|m| m.structure != structure) {
        return Err(Error::Structure("joint models must share one structure".into()));
    }
    let scaled: Vec<Dataset> = models
        .iter()
        .zip(datasets)
        .map(|(m, d)| d.with_scale(m.time_scale))
        .collect::<Result<_>>()?;
    let joint = JointDesign::new(&scaled, &structure);
    let q = structure.total_coefs();
    let q_total = q * models.len();
    let mut info = DMatrix::zeros(q_total, q_total);
    let mut flats = Vec::with_capacity(models.len());
    for (k, (m, part)) in models.iter().zip(&joint.parts).enumerate() {
        let h = part.hessian(m.coeffs.values())?;
        info.view_mut((k * q, k * q), (q, q)).copy_from(&(-h));
        flats.push(part.scores(m.coeffs.values())?);
    }
    warn_conditioning(&info);
    let mut rows: Vec<ScoreRow<'_>> = Vec::new();
    for (k, (d, flat)) in scaled.iter().zip(&flats).enumerate() {
        for (i, &t) in d.timestamps().iter().enumerate() {
            rows.push(ScoreRow { t, offset: k * q, values: &flat[i * q..(i + 1) * q] });
        }
    }
    // Stable sort keeps station order among equal timestamps.
    rows.sort_by(|a, b| a.t.total_cmp(&b.t));
    let k = hac_rows(&rows, q_total, hac);
    InferenceBundle::from_parts(info, k, hac)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `β̂_j ± z_{(1+level)/2}·sqrt(cov_jj)`.
pub fn confidence_intervals(
    names: &[String],
    estimates: &[f64],
    cov: &DMatrix<f64>,
    level: f64,
) -> Result<Vec<ConfidenceInterval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Invalid(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if estimates.len() != cov.nrows() || names.len() != estimates.len() {
        return Err(Error::LayoutMismatch { expected: cov.nrows(), actual: estimates.len() });
    }
    let z = norm_quantile(0.5 * (1.0 + level));
    Ok(estimates
        .iter()
        .enumerate()
        .map(|(j, &b)| {
            let se = cov[(j, j)].max(0.0).sqrt();
            ConfidenceInterval { name: names[j].clone(), estimate: b, std_error: se, lower: b - z * se, upper: b + z * se }
        })
        .collect())
}

/// Intervals for a fitted model from its bundle's sandwich covariance.
pub fn model_intervals(model: &FittedModel, bundle: &InferenceBundle, level: f64) -> Result<Vec<ConfidenceInterval>> {
    confidence_intervals(&model.coeffs.names(), model.coeffs.values(), &bundle.sandwich_cov, level)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub stat: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// `β̂_Sᵀ (Ĝ⁻¹)_{SS}⁻¹ β̂_S` against `χ²_{|S|}`.
pub fn wald_test(estimates: &[f64], cov: &DMatrix<f64>, subset: &[usize]) -> Result<WaldTest> {
    if subset.is_empty() {
        return Err(Error::Invalid("Wald test needs a non-empty coefficient subset".into()));
    }
    if let Some(&j) = subset.iter().find(|&&j| j >= estimates.len() || j >= cov.nrows()) {
        return Err(Error::Invalid(format!("coefficient index {j} out of range")));
    }
    let m = subset.len();
    let sub = DMatrix::from_fn(m, m, |a, b| cov[(subset[a], subset[b])]);
    let b = DVector::from_iterator(m, subset.iter().map(|&j| estimates[j]));
    let x = solve(&sub, &DMatrix::from_column_slice(m, 1, b.as_slice()))
        .map_err(|_| Error::Singular("covariance sub-block is singular".into()))?;
    let stat = b.dot(&x.column(0)).max(0.0);
    Ok(WaldTest { stat, dof: m, p_value: gamma_q(0.5 * m as f64, 0.5 * stat) })
}
