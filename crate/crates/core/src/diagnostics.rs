//! z-score residuals, QQ data, parameter curves and day-specific return
//! periods.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::design::{date_of, day_number, month_of};
use crate::error::{Error, Result};
use crate::estimation::{Dataset, FittedModel};
use crate::special::norm_quantile;

/// Probabilities are clamped to `[CLAMP, 1 − CLAMP]` before `Φ⁻¹`.
pub const CLAMP: f64 = 1e-15;

/// `Φ⁻¹(F(X_t | θ_t))`, computed from whichever tail is smaller.
pub fn z_scores(model: &FittedModel, data: &Dataset) -> Result<Vec<f64>> {
    let mut clamped = 0;
    let z = data
        .timestamps()
        .iter()
        .zip(data.values())
        .map(|(&t, &x)| {
            let (c, s) = model.predict(t)?.cdf_sf(x)?;
            let z = if c <= 0.5 {
                if c < CLAMP {
                    clamped += 1;
                }
                norm_quantile(c.max(CLAMP))
            } else {
                if s < CLAMP {
                    clamped += 1;
                }
                -norm_quantile(s.max(CLAMP))
            };
            Ok(z)
        })
        .collect::<Result<Vec<_>>>()?;
    if clamped > 0 {
        log::warn!("{clamped} probabilities clamped to [{CLAMP:e}, 1 - {CLAMP:e}]");
    }
    Ok(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub theoretical: f64,
    pub empirical: f64,
}

/// Sorted z-scores paired with `Φ⁻¹((i − ½)/m)`.
pub fn qq_data(zscores: &[f64]) -> Vec<QqPoint> {
    let mut sorted = zscores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, e)| QqPoint { theoretical: norm_quantile((i as f64 + 0.5) / m), empirical: e })
        .collect()
}

/// QQ data per calendar month; index 0 is January.
pub fn qq_by_month(zscores: &[f64], timestamps: &[f64]) -> Result<Vec<Vec<QqPoint>>> {
    if zscores.len() != timestamps.len() {
        return Err(Error::LayoutMismatch { expected: timestamps.len(), actual: zscores.len() });
    }
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); 12];
    for (&z, &t) in zscores.iter().zip(timestamps) {
        groups[month_of(t) as usize - 1].push(z);
    }
    Ok(groups.iter().map(|g| qq_data(g)).collect())
}

/// `1/(1 − F(x))` in years; `+∞` when the survival rounds to zero.
pub fn return_period(model: &FittedModel, t: f64, x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("level must be positive, got {x}")));
    }
    let s = model.predict(t)?.sf(x)?;
    Ok(if s > 0.0 { 1.0 / s } else { f64::INFINITY })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub date: NaiveDate,
    pub year: i32,
    pub day_of_year: u32,
    pub mu: f64,
    pub sigma: f64,
    pub nu: f64,
    pub mean: f64,
    /// `+∞` where `σ²ν ≤ −½`.
    pub sd: f64,
    pub tail_index: f64,
    pub sd_infinite: bool,
}

/// Daily parameters and summary statistics for every day of each year.
pub fn parameter_curves(model: &FittedModel, years: &[i32]) -> Result<Vec<CurvePoint>> {
    let mut out = Vec::new();
    for &year in years {
        let start = NaiveDate::from_ymd_opt(year, 1, 1).ok_or_else(|| Error::Invalid(format!("invalid year {year}")))?;
        let end = NaiveDate::from_ymd_opt(year + 1, 1, 1).ok_or_else(|| Error::Invalid(format!("invalid year {year}")))?;
        let (t0, t1) = (day_number(start), day_number(end));
        let mut t = t0;
        while t < t1 {
            let p = model.predict(t)?;
            let s = p.summary_stats();
            let date = date_of(t);
            out.push(CurvePoint {
                date,
                year,
                day_of_year: date.ordinal(),
                mu: p.mu(),
                sigma: p.sigma(),
                nu: p.nu(),
                mean: s.mean,
                sd: s.sd,
                tail_index: s.tail_index,
                sd_infinite: s.sd.is_infinite(),
            });
            t += 1.0;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub zscores: Vec<f64>,
    pub qq_global: Vec<QqPoint>,
    pub qq_by_month: Vec<Vec<QqPoint>>,
    pub curves: Vec<CurvePoint>,
}

pub fn diagnose(model: &FittedModel, data: &Dataset, years: &[i32]) -> Result<DiagnosticsReport> {
    let zscores = z_scores(model, data)?;
    Ok(DiagnosticsReport {
        qq_global: qq_data(&zscores),
        qq_by_month: qq_by_month(&zscores, data.timestamps())?,
        curves: parameter_curves(model, years)?,
        zscores,
    })
}
