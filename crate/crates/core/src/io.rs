//! CSV ingestion, model JSON and report serialization.
//!
//! Input CSV: `date,value[,station]`, dates in ISO-8601. A header row is
//! optional; when present it names the columns.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::design::{
    date_of, day_number, month_of, CoefficientSet, LinkSpec, ModelStructure, TimeGrid, TimeScale, DAYS_PER_DECADE,
    DEFAULT_PERIOD,
};
use crate::diagnostics::{CurvePoint, QqPoint};
use crate::error::{Error, Result};
use crate::estimation::{Dataset, FittedModel};
use crate::inference::{ConfidenceInterval, InferenceBundle};
use crate::selection::SelectionPath;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Label used when the input has no station column.
pub const DEFAULT_STATION: &str = "default";

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Writes `bytes` to a temporary file beside `path`, then renames it.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

struct Columns {
    date: usize,
    value: usize,
    station: Option<usize>,
}

fn header_columns(record: &csv::StringRecord) -> Option<Columns> {
    let find = |name: &str| record.iter().position(|f| f.trim().eq_ignore_ascii_case(name));
    Some(Columns { date: find("date")?, value: find("value")?, station: find("station") })
}

fn parse_date(field: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(field.trim(), "%Y-%m-%d").map_err(|e| parse_err(line, format!("invalid date '{}': {e}", field.trim())))
}

/// Reads one dataset per station (sorted by label). All datasets share a
/// trend standardization spanning the union of their dates.
pub fn ingest_reader<R: Read>(reader: R, period: f64) -> Result<Vec<Dataset>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut columns: Option<Columns> = None;
    let mut series: BTreeMap<String, Vec<(f64, f64, usize)>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if columns.is_none() {
            if let Some(c) = header_columns(&rec) {
                columns = Some(c);
                continue;
            }
            columns = Some(Columns { date: 0, value: 1, station: if rec.len() > 2 { Some(2) } else { None } });
        }
        let cols = columns.as_ref().expect("columns set");
        let field = |k: usize, what: &str| rec.get(k).filter(|f| !f.is_empty()).ok_or_else(|| parse_err(line, format!("missing {what}")));
        let date = parse_date(field(cols.date, "date")?, line)?;
        let raw = field(cols.value, "value")?;
        let value: f64 = raw.parse().map_err(|_| parse_err(line, format!("invalid value '{raw}'")))?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(parse_err(line, format!("value must be positive, got '{raw}'")));
        }
        let station = match cols.station {
            Some(k) => field(k, "station")?.to_string(),
            None => DEFAULT_STATION.to_string(),
        };
        series.entry(station).or_default().push((day_number(date), value, line));
    }
    if series.is_empty() {
        return Err(parse_err(0, "no observations"));
    }
    for rows in series.values() {
        for w in rows.windows(2) {
            if w[1].0 == w[0].0 {
                return Err(parse_err(w[1].2, format!("duplicate date {}", date_of(w[1].0))));
            }
            if w[1].0 < w[0].0 {
                return Err(parse_err(w[1].2, format!("date {} is earlier than the previous row", date_of(w[1].0))));
            }
        }
    }
    let first = series.values().map(|r| r[0].0).fold(f64::INFINITY, f64::min);
    let last = series.values().map(|r| r[r.len() - 1].0).fold(f64::NEG_INFINITY, f64::max);
    let scale = TimeScale::spanning(first, last, period);
    series
        .into_iter()
        .map(|(station, rows)| {
            let grid = TimeGrid::with_scale(rows.iter().map(|r| r.0).collect(), scale)?;
            Dataset::new(station, grid, rows.iter().map(|r| r.1).collect())
        })
        .collect()
}

pub fn ingest_csv(path: &Path, period: f64) -> Result<Vec<Dataset>> {
    ingest_reader(fs::File::open(path)?, period)
}

/// Writes datasets back as `date,value,station`.
pub fn datasets_csv(datasets: &[Dataset]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["date", "value", "station"])?;
    for d in datasets {
        for (&t, &v) in d.timestamps().iter().zip(d.values()) {
            w.write_record([date_of(t).to_string(), format!("{v}"), d.station.clone()])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendEffect {
    pub name: String,
    /// Change of the linear predictor per decade.
    pub per_decade: f64,
}

/// Self-describing model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub station: String,
    pub structure: ModelStructure,
    pub links: LinkSpec,
    pub period: f64,
    pub trend_center: f64,
    pub trend_scale: f64,
    pub coefficient_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub loglik: f64,
    pub n_obs: usize,
    pub q: usize,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tic: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sandwich_cov: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub confidence_intervals: Vec<ConfidenceInterval>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trend_per_decade: Vec<TrendEffect>,
}

impl ModelFile {
    pub fn from_model(model: &FittedModel, station: &str) -> Self {
        let names = model.coeffs.names();
        let trend_per_decade = model
            .structure
            .trend_indices()
            .into_iter()
            .map(|j| TrendEffect {
                name: names[j].clone(),
                per_decade: model.coeffs.values()[j] * DAYS_PER_DECADE / model.time_scale.trend_scale,
            })
            .collect();
        Self {
            format_version: MODEL_FORMAT_VERSION,
            station: station.to_string(),
            structure: model.structure,
            links: model.links,
            period: model.time_scale.period,
            trend_center: model.time_scale.trend_center,
            trend_scale: model.time_scale.trend_scale,
            coefficient_names: names,
            coefficients: model.coeffs.values().to_vec(),
            loglik: model.loglik,
            n_obs: model.n_obs,
            q: model.coef_total(),
            converged: model.converged,
            iterations: model.iterations,
            tic: None,
            bandwidth: None,
            sandwich_cov: None,
            confidence_intervals: Vec::new(),
            trend_per_decade,
        }
    }

    pub fn with_inference(mut self, bundle: &InferenceBundle, tic: f64, intervals: Vec<ConfidenceInterval>) -> Self {
        let cov = &bundle.sandwich_cov;
        self.tic = Some(tic);
        self.bandwidth = Some(bundle.bandwidth);
        self.sandwich_cov = Some((0..cov.nrows()).map(|i| cov.row(i).iter().copied().collect()).collect());
        self.confidence_intervals = intervals;
        self
    }

    pub fn to_model(&self) -> Result<FittedModel> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Invalid(format!("unsupported model format version {}", self.format_version)));
        }
        if self.links != LinkSpec::default() {
            return Err(Error::Invalid("unsupported link functions".into()));
        }
        let time_scale = TimeScale { period: self.period, trend_center: self.trend_center, trend_scale: self.trend_scale };
        time_scale.validate()?;
        let coeffs = CoefficientSet::new(self.structure, self.coefficients.clone())?;
        if self.coefficient_names != coeffs.names() {
            return Err(Error::Invalid("coefficient names do not match the structure".into()));
        }
        Ok(FittedModel {
            structure: self.structure,
            links: self.links,
            coeffs,
            loglik: self.loglik,
            time_scale,
            n_obs: self.n_obs,
            converged: self.converged,
            iterations: self.iterations,
            grad_sup_norm: f64::NAN,
        })
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }
}

/// A model file holding one or more stations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelDocument {
    Single(ModelFile),
    Joint { stations: Vec<ModelFile> },
}

impl ModelDocument {
    pub fn stations(&self) -> Vec<&ModelFile> {
        match self {
            ModelDocument::Single(m) => vec![m],
            ModelDocument::Joint { stations } => stations.iter().collect(),
        }
    }

    /// The model for `station`, or the only one when `station` is `None`.
    pub fn model_for(&self, station: Option<&str>) -> Result<FittedModel> {
        let all = self.stations();
        let chosen = match station {
            Some(s) => all.into_iter().find(|m| m.station == s).ok_or_else(|| Error::Invalid(format!("no model for station '{s}'")))?,
            None if all.len() == 1 => all[0],
            None => return Err(Error::Invalid("model file holds several stations; name one".into())),
        };
        chosen.to_model()
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }
}

pub fn read_model(path: &Path) -> Result<ModelDocument> {
    let raw = fs::read(path)?;
    Ok(serde_json::from_slice(&raw)?)
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else if v > 0.0 {
        "inf".into()
    } else if v < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

/// Path report: `step,structure,loglik,q,tic,updated_param,update_kind`.
pub fn path_csv(path: &SelectionPath) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "structure", "loglik", "q", "tic", "updated_param", "update_kind"])?;
    for s in &path.steps {
        w.write_record([
            s.step.to_string(),
            s.structure.to_string(),
            fmt_num(s.loglik),
            s.coef_total.to_string(),
            fmt_num(s.tic),
            s.updated_param.map(|p| p.to_string()).unwrap_or_default(),
            s.update_kind.map(|k| k.to_string()).unwrap_or_default(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[derive(Serialize)]
struct PathJson<'a> {
    steps: &'a [crate::selection::SelectionStep],
    best_tic_index: usize,
    final_index: usize,
    stopped_early: bool,
}

pub fn path_json(path: &SelectionPath, final_index: usize) -> Result<Vec<u8>> {
    let doc = PathJson { steps: &path.steps, best_tic_index: path.best_tic_index, final_index, stopped_early: path.stopped_early };
    let mut out = serde_json::to_vec_pretty(&doc)?;
    out.push(b'\n');
    Ok(out)
}

/// `date,value,mu,sigma,nu,z,month`.
pub fn diagnostics_csv(model: &FittedModel, data: &Dataset, zscores: &[f64]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["date", "value", "mu", "sigma", "nu", "z", "month"])?;
    for ((&t, &x), &z) in data.timestamps().iter().zip(data.values()).zip(zscores) {
        let p = model.predict(t)?;
        w.write_record([
            date_of(t).to_string(),
            format!("{x}"),
            fmt_num(p.mu()),
            fmt_num(p.sigma()),
            fmt_num(p.nu()),
            fmt_num(z),
            month_of(t).to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// `theoretical,empirical,month`; `month` is empty for the global pairing.
pub fn qq_csv(global: &[QqPoint], by_month: &[Vec<QqPoint>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["theoretical", "empirical", "month"])?;
    for q in global {
        w.write_record([fmt_num(q.theoretical), fmt_num(q.empirical), String::new()])?;
    }
    for (m, pts) in by_month.iter().enumerate() {
        for q in pts {
            w.write_record([fmt_num(q.theoretical), fmt_num(q.empirical), (m + 1).to_string()])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn curves_csv(curves: &[CurvePoint]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["date", "year", "day_of_year", "mu", "sigma", "nu", "mean", "sd", "tail_index", "sd_infinite"])?;
    for c in curves {
        w.write_record([
            c.date.to_string(),
            c.year.to_string(),
            c.day_of_year.to_string(),
            fmt_num(c.mu),
            fmt_num(c.sigma),
            fmt_num(c.nu),
            fmt_num(c.mean),
            fmt_num(c.sd),
            fmt_num(c.tail_index),
            c.sd_infinite.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Default period when none is configured.
pub fn default_period() -> f64 {
    DEFAULT_PERIOD
}
