//! Time-based covariates, predictor structures and the coefficient layout.
//!
//! Each distribution parameter θ ∈ {μ, σ, ν} has a linear predictor
//!
//! ```text
//! g_θ(θ_t) = β₀ + Σ_{k≤d} (β_k^c C_k(t) + β_k^s S_k(t))
//!               + [β^t t* + Σ_{k≤p} (β_k^{ct} C_k(t) + β_k^{st} S_k(t)) t*]
//! ```
//!
//! with `C_k(t) = cos(2πkt/P)`, `S_k(t) = sin(2πkt/P)` and the bracketed
//! trend block present only when the structure carries a trend. The trend
//! covariate is standardized, `t* = (t − center)/scale`.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::distribution::DistParams;
use crate::error::{Error, Result};

pub const DEFAULT_PERIOD: f64 = 365.25;

/// Days per decade, used to report trend effects per decade.
pub const DAYS_PER_DECADE: f64 = 3652.5;

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1900, 1, 1).expect("valid epoch")
}

/// Days since 1900-01-01 (proleptic Gregorian).
pub fn day_number(date: NaiveDate) -> f64 {
    (date - epoch()).num_days() as f64
}

/// Calendar date containing day number `t`.
pub fn date_of(t: f64) -> NaiveDate {
    epoch() + Duration::days(t.floor() as i64)
}

/// Calendar month (1–12) of day number `t`.
pub fn month_of(t: f64) -> u32 {
    date_of(t).month()
}

/// Distribution parameter identifier, ordered μ < σ < ν.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Mu,
    Sigma,
    Nu,
}

impl Param {
    pub const ALL: [Param; 3] = [Param::Mu, Param::Sigma, Param::Nu];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::Mu => "mu",
            Param::Sigma => "sigma",
            Param::Nu => "nu",
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu" => Ok(Param::Mu),
            "sigma" => Ok(Param::Sigma),
            "nu" => Ok(Param::Nu),
            other => Err(Error::Structure(format!("unknown parameter '{other}'"))),
        }
    }
}

/// Shape `S_θ = (d, p)` of one linear predictor; `interactions == None` is
/// the purely seasonal `(d, -)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PredictorShape {
    pub seasonal: u32,
    pub interactions: Option<u32>,
}

impl PredictorShape {
    pub const fn seasonal(d: u32) -> Self {
        Self { seasonal: d, interactions: None }
    }

    pub const fn dynamic(d: u32, p: u32) -> Self {
        Self { seasonal: d, interactions: Some(p) }
    }

    pub fn has_trend(&self) -> bool {
        self.interactions.is_some()
    }

    pub fn coef_count(&self) -> usize {
        let d = self.seasonal as usize;
        match self.interactions {
            None => 1 + 2 * d,
            Some(p) => 2 + 2 * d + 2 * p as usize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.interactions {
            Some(p) if p > self.seasonal => Err(Error::Structure(format!(
                "interaction count {p} exceeds seasonal count {}",
                self.seasonal
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PredictorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.interactions {
            None => write!(f, "({},-)", self.seasonal),
            Some(p) => write!(f, "({},{})", self.seasonal, p),
        }
    }
}

impl FromStr for PredictorShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Structure(format!("malformed predictor shape '{s}'"));
        let inner = s.strip_prefix('(').and_then(|r| r.strip_suffix(')')).ok_or_else(bad)?;
        let (d, p) = inner.split_once(',').ok_or_else(bad)?;
        let parse_count = |v: &str| -> Result<u32> {
            if v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            v.parse().map_err(|_| bad())
        };
        let seasonal = parse_count(d)?;
        let interactions = if p == "-" { None } else { Some(parse_count(p)?) };
        let shape = Self { seasonal, interactions };
        shape.validate()?;
        Ok(shape)
    }
}

/// Predictor shapes for μ, σ and ν.
///
/// Serialized as `mu=(4,2);sigma=(5,-);nu=(2,2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ModelStructure {
    shapes: [PredictorShape; 3],
}

impl ModelStructure {
    pub fn new(mu: PredictorShape, sigma: PredictorShape, nu: PredictorShape) -> Result<Self> {
        let s = Self { shapes: [mu, sigma, nu] };
        for shape in &s.shapes {
            shape.validate()?;
        }
        Ok(s)
    }

    /// Intercept-only structure `(0,-)` for every parameter.
    pub fn base() -> Self {
        Self::default()
    }

    pub fn shape(&self, param: Param) -> PredictorShape {
        self.shapes[param.index()]
    }

    pub fn shapes(&self) -> &[PredictorShape; 3] {
        &self.shapes
    }

    pub fn with_shape(&self, param: Param, shape: PredictorShape) -> Result<Self> {
        shape.validate()?;
        let mut s = *self;
        s.shapes[param.index()] = shape;
        Ok(s)
    }

    pub fn coef_count(&self, param: Param) -> usize {
        self.shape(param).coef_count()
    }

    pub fn total_coefs(&self) -> usize {
        self.shapes.iter().map(PredictorShape::coef_count).sum()
    }

    /// Offset of each parameter's block in the concatenated vector.
    pub fn offsets(&self) -> [usize; 3] {
        let k0 = self.shapes[0].coef_count();
        let k1 = self.shapes[1].coef_count();
        [0, k0, k0 + k1]
    }

    pub fn is_purely_seasonal(&self) -> bool {
        self.shapes.iter().all(|s| !s.has_trend())
    }

    /// Names of the coefficients of one parameter, in layout order.
    pub fn coef_names(&self, param: Param) -> Vec<String> {
        let shape = self.shape(param);
        let p = param.name();
        let mut names = vec![format!("{p}:intercept")];
        for k in 1..=shape.seasonal {
            names.push(format!("{p}:cos{k}"));
            names.push(format!("{p}:sin{k}"));
        }
        if let Some(q) = shape.interactions {
            names.push(format!("{p}:trend"));
            for k in 1..=q {
                names.push(format!("{p}:cos{k}:trend"));
                names.push(format!("{p}:sin{k}:trend"));
            }
        }
        names
    }

    pub fn all_coef_names(&self) -> Vec<String> {
        Param::ALL.iter().flat_map(|&p| self.coef_names(p)).collect()
    }

    /// Index, in the concatenated layout, of coefficients that multiply the
    /// trend covariate.
    pub fn trend_indices(&self) -> Vec<usize> {
        let offsets = self.offsets();
        let mut out = Vec::new();
        for param in Param::ALL {
            let shape = self.shape(param);
            if let Some(q) = shape.interactions {
                let start = offsets[param.index()] + 1 + 2 * shape.seasonal as usize;
                out.extend(start..start + 1 + 2 * q as usize);
            }
        }
        out
    }

    /// Re-embeds coefficients laid out for `self` into the layout of a larger
    /// `target` structure, leaving new slots at zero.
    pub fn embed_into(&self, values: &[f64], target: &ModelStructure) -> Result<Vec<f64>> {
        if values.len() != self.total_coefs() {
            return Err(Error::LayoutMismatch { expected: self.total_coefs(), actual: values.len() });
        }
        let mut out = vec![0.0; target.total_coefs()];
        let (src_off, dst_off) = (self.offsets(), target.offsets());
        for param in Param::ALL {
            let (src, dst) = (self.shape(param), target.shape(param));
            if dst.seasonal < src.seasonal
                || (src.has_trend() && !dst.has_trend())
                || src.interactions.unwrap_or(0) > dst.interactions.unwrap_or(0)
            {
                return Err(Error::Structure(format!(
                    "{param}: {dst} does not nest {src}"
                )));
            }
            let s0 = src_off[param.index()];
            let d0 = dst_off[param.index()];
            let ds = 1 + 2 * src.seasonal as usize;
            out[d0..d0 + ds].copy_from_slice(&values[s0..s0 + ds]);
            if let Some(q) = src.interactions {
                let n = 1 + 2 * q as usize;
                let s_tr = s0 + ds;
                let d_tr = d0 + 1 + 2 * dst.seasonal as usize;
                out[d_tr..d_tr + n].copy_from_slice(&values[s_tr..s_tr + n]);
            }
        }
        Ok(out)
    }
}

impl fmt::Display for ModelStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mu={};sigma={};nu={}",
            self.shapes[0], self.shapes[1], self.shapes[2]
        )
    }
}

impl FromStr for ModelStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(';').collect();
        if parts.len() != 3 {
            return Err(Error::Structure(format!(
                "expected 'mu=(d,p);sigma=(d,p);nu=(d,p)', got '{s}'"
            )));
        }
        let mut shapes = [PredictorShape::default(); 3];
        for (part, param) in parts.iter().zip(Param::ALL) {
            let rest = part
                .strip_prefix(param.name())
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| Error::Structure(format!("expected '{}=' in '{part}'", param.name())))?;
            shapes[param.index()] = rest.parse()?;
        }
        Ok(Self { shapes })
    }
}

impl Serialize for ModelStructure {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModelStructure {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Link functions. The set is fixed: log for μ and σ, identity for ν.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub mu: Link,
    pub sigma: Link,
    pub nu: Link,
}

impl LinkSpec {
    pub fn get(&self, param: Param) -> Link {
        match param {
            Param::Mu => self.mu,
            Param::Sigma => self.sigma,
            Param::Nu => self.nu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    Log,
    Identity,
}

impl Default for LinkSpec {
    fn default() -> Self {
        Self { mu: Link::Log, sigma: Link::Log, nu: Link::Identity }
    }
}

impl Link {
    pub fn apply(self, value: f64) -> f64 {
        match self {
            Link::Log => value.ln(),
            Link::Identity => value,
        }
    }

    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Log => eta.exp(),
            Link::Identity => eta,
        }
    }
}

/// Period and trend standardization shared by every row of a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScale {
    pub period: f64,
    pub trend_center: f64,
    pub trend_scale: f64,
}

impl TimeScale {
    /// Standardization spanning `[first, last]` onto `[−1, 1]`.
    pub fn spanning(first: f64, last: f64, period: f64) -> Self {
        let half = 0.5 * (last - first);
        Self {
            period,
            trend_center: 0.5 * (first + last),
            trend_scale: if half > 0.0 { half } else { 1.0 },
        }
    }

    pub fn standardized_trend(&self, t: f64) -> f64 {
        (t - self.trend_center) / self.trend_scale
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::Invalid(format!("period must be positive, got {}", self.period)));
        }
        if !(self.trend_scale > 0.0 && self.trend_scale.is_finite()) {
            return Err(Error::Invalid(format!(
                "trend scale must be positive, got {}",
                self.trend_scale
            )));
        }
        if !self.trend_center.is_finite() {
            return Err(Error::Invalid("trend center must be finite".into()));
        }
        Ok(())
    }
}

/// Ordered observation times (day numbers) plus their [`TimeScale`].
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    timestamps: Vec<f64>,
    scale: TimeScale,
}

impl TimeGrid {
    /// Grid whose trend standardization spans the timestamps themselves.
    pub fn new(timestamps: Vec<f64>, period: f64) -> Result<Self> {
        let first = timestamps.first().copied().unwrap_or(0.0);
        let last = timestamps.last().copied().unwrap_or(0.0);
        Self::with_scale(timestamps, TimeScale::spanning(first, last, period))
    }

    pub fn with_scale(timestamps: Vec<f64>, scale: TimeScale) -> Result<Self> {
        scale.validate()?;
        if let Some(i) = timestamps.iter().position(|t| !t.is_finite()) {
            return Err(Error::Invalid(format!("timestamp {i} is not finite")));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(format!(
                "timestamps must be strictly increasing (positions {} and {})",
                i,
                i + 1
            )));
        }
        Ok(Self { timestamps, scale })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn scale(&self) -> &TimeScale {
        &self.scale
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// `(cos(2πkt/P), sin(2πkt/P))`.
pub fn fourier_pair(k: u32, t: f64, period: f64) -> (f64, f64) {
    // Reduce the phase first so large day numbers keep full precision.
    let phase = (k as f64 * t / period).rem_euclid(1.0);
    let angle = std::f64::consts::TAU * phase;
    (angle.cos(), angle.sin())
}

/// Writes the covariate row of one predictor into `out`.
pub fn fill_row(shape: PredictorShape, t: f64, scale: &TimeScale, out: &mut Vec<f64>) {
    out.push(1.0);
    let mut pairs = Vec::with_capacity(shape.seasonal as usize);
    for k in 1..=shape.seasonal {
        let (c, s) = fourier_pair(k, t, scale.period);
        out.push(c);
        out.push(s);
        pairs.push((c, s));
    }
    if let Some(q) = shape.interactions {
        let ts = scale.standardized_trend(t);
        out.push(ts);
        for &(c, s) in pairs.iter().take(q as usize) {
            out.push(c * ts);
            out.push(s * ts);
        }
    }
}

/// Covariate row `a_θt` for parameter `param`.
pub fn build_row(structure: &ModelStructure, param: Param, t: f64, scale: &TimeScale) -> Vec<f64> {
    let shape = structure.shape(param);
    let mut row = Vec::with_capacity(shape.coef_count());
    fill_row(shape, t, scale, &mut row);
    row
}

/// Concatenated coefficient vector `β = (β_μ, β_σ, β_ν)` tied to a structure.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    structure: ModelStructure,
    values: Vec<f64>,
}

impl CoefficientSet {
    pub fn new(structure: ModelStructure, values: Vec<f64>) -> Result<Self> {
        let expected = structure.total_coefs();
        if values.len() != expected {
            return Err(Error::LayoutMismatch { expected, actual: values.len() });
        }
        Ok(Self { structure, values })
    }

    pub fn zeros(structure: ModelStructure) -> Self {
        Self { structure, values: vec![0.0; structure.total_coefs()] }
    }

    pub fn structure(&self) -> &ModelStructure {
        &self.structure
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn block(&self, param: Param) -> &[f64] {
        let off = self.structure.offsets()[param.index()];
        &self.values[off..off + self.structure.coef_count(param)]
    }

    pub fn block_mut(&mut self, param: Param) -> &mut [f64] {
        let off = self.structure.offsets()[param.index()];
        let n = self.structure.coef_count(param);
        &mut self.values[off..off + n]
    }

    pub fn names(&self) -> Vec<String> {
        self.structure.all_coef_names()
    }

    /// Warm start for a nesting structure: copies shared slots, zeros the rest.
    pub fn embed_into(&self, target: &ModelStructure) -> Result<Self> {
        Ok(Self { structure: *target, values: self.structure.embed_into(&self.values, target)? })
    }

    /// Linear predictor `η_θ(t)`.
    pub fn linear_predictor(&self, param: Param, t: f64, scale: &TimeScale) -> f64 {
        let row = build_row(&self.structure, param, t, scale);
        row.iter().zip(self.block(param)).map(|(a, b)| a * b).sum()
    }
}

/// Linear predictors mapped through the inverse links.
pub fn predict_params(
    coeffs: &CoefficientSet,
    structure: &ModelStructure,
    links: &LinkSpec,
    t: f64,
    scale: &TimeScale,
) -> Result<DistParams> {
    if coeffs.structure() != structure {
        return Err(Error::LayoutMismatch {
            expected: structure.total_coefs(),
            actual: coeffs.values().len(),
        });
    }
    let [mu, sigma, nu] = Param::ALL.map(|p| links.get(p).inverse(coeffs.linear_predictor(p, t, scale)));
    DistParams::new(mu, sigma, nu).map_err(|e| Error::DomainAt { timestamp: t, message: e.to_string() })
}

/// Kind of a single stepwise structure update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateKind {
    /// `(d, p) → (d+1, p)`
    OnePair,
    /// `(d, p) → (d+2, p)`
    TwoPairs,
    /// `(d, -) → (d, 0)` or `(d, p) → (d, p+1)`
    TrendOrInteraction,
    /// `(d, p) → (d, p+2)`
    TwoInteractions,
}

impl UpdateKind {
    pub fn label(self) -> &'static str {
        match self {
            UpdateKind::OnePair => "+1 pair",
            UpdateKind::TwoPairs => "+2 pairs",
            UpdateKind::TrendOrInteraction => "+trend/+1 interaction",
            UpdateKind::TwoInteractions => "+2 interactions",
        }
    }
}

impl fmt::Display for UpdateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    PurelySeasonal,
    Dynamic,
}

impl FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "purely-seasonal" | "seasonal" => Ok(SelectionMode::PurelySeasonal),
            "dynamic" => Ok(SelectionMode::Dynamic),
            other => Err(Error::Invalid(format!("unknown selection mode '{other}'"))),
        }
    }
}

/// A proposed structure together with the update that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub structure: ModelStructure,
    pub param: Param,
    pub kind: UpdateKind,
}

impl Candidate {
    /// Highest Fourier frequency touched by the update.
    pub fn frequency(&self) -> u32 {
        let s = self.structure.shape(self.param);
        match self.kind {
            UpdateKind::OnePair | UpdateKind::TwoPairs => s.seasonal,
            UpdateKind::TrendOrInteraction | UpdateKind::TwoInteractions => s.interactions.unwrap_or(0),
        }
    }
}

/// Candidate structures reachable from `structure` in one step.
///
/// Order is μ, σ, ν and, within a parameter, +1 pair, +2 pairs, then (dynamic
/// mode) +trend/+1 interaction and +2 interactions.
pub fn candidate_updates(structure: &ModelStructure, mode: SelectionMode) -> Vec<Candidate> {
    let mut out = Vec::with_capacity(12);
    for param in Param::ALL {
        let shape = structure.shape(param);
        let mut push = |new: PredictorShape, kind| {
            if let Ok(s) = structure.with_shape(param, new) {
                out.push(Candidate { structure: s, param, kind });
            }
        };
        push(PredictorShape { seasonal: shape.seasonal + 1, ..shape }, UpdateKind::OnePair);
        push(PredictorShape { seasonal: shape.seasonal + 2, ..shape }, UpdateKind::TwoPairs);
        if mode == SelectionMode::Dynamic {
            // An absent trend counts as p = −1.
            let p = shape.interactions.map_or(-1, |p| p as i64);
            if p + 1 <= shape.seasonal as i64 {
                push(
                    PredictorShape::dynamic(shape.seasonal, (p + 1) as u32),
                    UpdateKind::TrendOrInteraction,
                );
            }
            if shape.has_trend() && p + 2 <= shape.seasonal as i64 {
                push(PredictorShape::dynamic(shape.seasonal, (p + 2) as u32), UpdateKind::TwoInteractions);
            }
        }
    }
    out
}
