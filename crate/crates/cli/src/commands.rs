//! Command implementations. Each returns a JSON summary for stdout.

use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use ggseason::design::{date_of, day_number, CoefficientSet, LinkSpec, ModelStructure, TimeScale};
use ggseason::diagnostics::{diagnose, return_period};
use ggseason::estimation::{fit, fit_joint, Dataset, FitOptions, FittedModel};
use ggseason::inference::{infer, model_intervals, HacOptions};
use ggseason::io::{
    atomic_write, curves_csv, datasets_csv, diagnostics_csv, ingest_csv, path_csv, path_json, qq_csv, read_model,
    ModelDocument, ModelFile,
};
use ggseason::selection::{select_final, stepwise_select, tic};
use ggseason::simulate::simulate_series;

use crate::config::{ReturnPeriodQuery, RunConfig, SimulateConfig};
use crate::error::{CliError, CliResult};

pub const PATH_CSV: &str = "path.csv";
pub const PATH_JSON: &str = "path.json";
pub const MODEL_JSON: &str = "model.json";
pub const DATA_CSV: &str = "data.csv";
pub const RETURN_PERIODS_CSV: &str = "return_periods.csv";

/// Reads the CSV and keeps the configured stations.
pub fn load_data(path: &Path, cfg: &RunConfig) -> CliResult<Vec<Dataset>> {
    let all = ingest_csv(path, cfg.period)?;
    if cfg.stations.is_empty() {
        return Ok(all);
    }
    cfg.stations
        .iter()
        .map(|s| {
            all.iter()
                .find(|d| &d.station == s)
                .cloned()
                .ok_or_else(|| CliError::config(format!("station '{s}' not found in {}", path.display())))
        })
        .collect()
}

fn require_converged(models: &[FittedModel]) -> CliResult<()> {
    match models.iter().find(|m| !m.converged) {
        Some(m) => Err(CliError::Convergence(format!(
            "fit of {} did not converge after {} iterations (gradient sup-norm {:e})",
            m.structure, m.iterations, m.grad_sup_norm
        ))),
        None => Ok(()),
    }
}

/// Model JSON with per-station sandwich inference and TIC.
pub fn model_document(models: &[FittedModel], datasets: &[Dataset], hac: &HacOptions, level: f64) -> CliResult<ModelDocument> {
    let files = models
        .iter()
        .zip(datasets)
        .map(|(m, d)| {
            let bundle = infer(m, d, hac)?;
            let t = tic(m.loglik, &bundle)?;
            let ci = model_intervals(m, &bundle, level)?;
            Ok(ModelFile::from_model(m, &d.station).with_inference(&bundle, t, ci))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(if files.len() == 1 {
        ModelDocument::Single(files.into_iter().next().expect("one model"))
    } else {
        ModelDocument::Joint { stations: files }
    })
}

fn total_tic(doc: &ModelDocument) -> f64 {
    doc.stations().iter().filter_map(|m| m.tic).sum()
}

pub fn cmd_fit(cfg: &RunConfig, data: &Path, structure: &ModelStructure, out: &Path) -> CliResult<Value> {
    let datasets = load_data(data, cfg)?;
    let links = LinkSpec::default();
    let opts = FitOptions::default();
    let models = if datasets.len() == 1 {
        vec![fit(&datasets[0], structure, &links, None, &opts)?]
    } else {
        fit_joint(&datasets, structure, &links, None, &opts)?
    };
    require_converged(&models)?;
    let doc = model_document(&models, &datasets, &cfg.hac(), cfg.level)?;
    atomic_write(out, &doc.to_json()?)?;
    Ok(json!({
        "command": "fit",
        "structure": structure.to_string(),
        "stations": datasets.len(),
        "q": structure.total_coefs(),
        "loglik": models.iter().map(|m| m.loglik).sum::<f64>(),
        "tic": total_tic(&doc),
        "model": out.display().to_string(),
    }))
}

pub struct SelectOutcome {
    pub summary: Value,
    pub document: ModelDocument,
}

/// Runs the search and writes the path reports and the final model.
pub fn select_datasets(cfg: &RunConfig, datasets: &[Dataset], out_dir: &Path) -> CliResult<SelectOutcome> {
    let path = stepwise_select(datasets, &cfg.selection())?;
    let final_index = select_final(&path, cfg.final_strategy());
    let models = path.models[final_index].clone();
    let doc = model_document(&models, datasets, &cfg.hac(), cfg.level)?;
    let outputs = [out_dir.join(PATH_CSV), out_dir.join(PATH_JSON), out_dir.join(MODEL_JSON)];
    atomic_write(&outputs[0], &path_csv(&path)?)?;
    atomic_write(&outputs[1], &path_json(&path, final_index)?)?;
    atomic_write(&outputs[2], &doc.to_json()?)?;
    require_converged(&models)?;
    let summary = json!({
        "command": "select",
        "steps": path.steps.len(),
        "best_tic_index": path.best_tic_index,
        "final_index": final_index,
        "final_structure": path.steps[final_index].structure.to_string(),
        "stopped_early": path.stopped_early,
        "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    Ok(SelectOutcome { summary, document: doc })
}

pub fn cmd_select(cfg: &RunConfig, data: &Path) -> CliResult<Value> {
    let datasets = load_data(data, cfg)?;
    Ok(select_datasets(cfg, &datasets, &cfg.output_dir)?.summary)
}

fn suffixed(dir: &Path, stem: &str, station: &str, several: bool) -> PathBuf {
    if several {
        dir.join(format!("{stem}-{station}.csv"))
    } else {
        dir.join(format!("{stem}.csv"))
    }
}

fn model_for_dataset(doc: &ModelDocument, data: &Dataset) -> CliResult<FittedModel> {
    let stations = doc.stations();
    if stations.len() == 1 {
        Ok(stations[0].to_model()?)
    } else {
        Ok(doc.model_for(Some(&data.station))?)
    }
}

/// Writes `diagnostics`, `qq` and `curves` CSVs for each dataset.
pub fn diagnose_datasets(doc: &ModelDocument, datasets: &[Dataset], years: &[i32], out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let several = datasets.len() > 1;
    let mut written = Vec::new();
    for d in datasets {
        let model = model_for_dataset(doc, d)?;
        let years = if years.is_empty() { vec![date_of(d.timestamps()[0]).year()] } else { years.to_vec() };
        let report = diagnose(&model, d, &years)?;
        let files = [
            (suffixed(out_dir, "diagnostics", &d.station, several), diagnostics_csv(&model, d, &report.zscores)?),
            (suffixed(out_dir, "qq", &d.station, several), qq_csv(&report.qq_global, &report.qq_by_month)?),
            (suffixed(out_dir, "curves", &d.station, several), curves_csv(&report.curves)?),
        ];
        for (p, bytes) in files {
            atomic_write(&p, &bytes)?;
            written.push(p);
        }
    }
    Ok(written)
}

pub fn cmd_diagnose(cfg: &RunConfig, model: &Path, data: &Path) -> CliResult<Value> {
    let doc = read_model(model)?;
    let datasets = load_data(data, cfg)?;
    let written = diagnose_datasets(&doc, &datasets, &cfg.years, &cfg.output_dir)?;
    Ok(json!({
        "command": "diagnose",
        "outputs": written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    }))
}

pub struct ReturnPeriodRow {
    pub date: NaiveDate,
    pub station: String,
    pub value: f64,
    pub return_period: f64,
}

pub fn evaluate_return_period(doc: &ModelDocument, query: &ReturnPeriodQuery) -> CliResult<ReturnPeriodRow> {
    let stations = doc.stations();
    let file = match &query.station {
        Some(s) => *stations
            .iter()
            .find(|m| &m.station == s)
            .ok_or_else(|| CliError::config(format!("no model for station '{s}'")))?,
        None if stations.len() == 1 => stations[0],
        None => return Err(CliError::config("model file holds several stations; name one")),
    };
    let model = file.to_model()?;
    let t = day_number(query.date);
    let value = match (query.value, query.quantile) {
        (Some(v), None) => v,
        (None, Some(p)) => model.predict(t)?.quantile(p)?,
        _ => return Err(CliError::config("give exactly one of value and quantile")),
    };
    Ok(ReturnPeriodRow { date: query.date, station: file.station.clone(), value, return_period: return_period(&model, t, value)? })
}

fn row_json(r: &ReturnPeriodRow) -> Value {
    json!({
        "date": r.date.to_string(),
        "station": r.station,
        "value": r.value,
        "return_period": if r.return_period.is_finite() { json!(r.return_period) } else { json!("inf") },
    })
}

pub fn cmd_return_period(model: &Path, query: &ReturnPeriodQuery) -> CliResult<Value> {
    let doc = read_model(model)?;
    Ok(row_json(&evaluate_return_period(&doc, query)?))
}

fn return_periods_csv(rows: &[ReturnPeriodRow]) -> String {
    let mut out = String::from("date,station,value,return_period\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.date, r.station, r.value, r.return_period));
    }
    out
}

/// Simulated series as CSV bytes.
pub fn simulate_csv(sim: &SimulateConfig, period: f64) -> CliResult<Vec<u8>> {
    let start = day_number(sim.start);
    let timestamps: Vec<f64> = (0..sim.days).map(|i| start + i as f64).collect();
    let (coeffs, scale) = match (&sim.model, &sim.structure, &sim.coefficients) {
        (Some(path), _, _) => {
            let doc = read_model(path)?;
            let model = doc.model_for(None)?;
            (model.coeffs, model.time_scale)
        }
        (None, Some(st), Some(values)) => (
            CoefficientSet::new(*st, values.clone())?,
            TimeScale::spanning(timestamps[0], timestamps[timestamps.len() - 1], period),
        ),
        _ => return Err(CliError::config("simulate needs either a model or a structure with coefficients")),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    let values = simulate_series(&coeffs, &LinkSpec::default(), &scale, &timestamps, sim.ar_phi, &mut rng)?;
    let data = Dataset::from_series(sim.station.clone(), timestamps, values, period)?;
    Ok(datasets_csv(std::slice::from_ref(&data))?)
}

pub fn cmd_simulate(sim: &SimulateConfig, period: f64, out: &Path) -> CliResult<Value> {
    atomic_write(out, &simulate_csv(sim, period)?)?;
    Ok(json!({ "command": "simulate", "days": sim.days, "output": out.display().to_string() }))
}

/// Optional simulation, then select, diagnose and return periods.
pub fn cmd_run(cfg: &RunConfig) -> CliResult<Value> {
    let out_dir = &cfg.output_dir;
    let data_path = match (&cfg.simulate, &cfg.data) {
        (Some(sim), _) => {
            let p = out_dir.join(DATA_CSV);
            atomic_write(&p, &simulate_csv(sim, cfg.period)?)?;
            p
        }
        (None, Some(d)) => d.clone(),
        (None, None) => return Err(CliError::config("run needs `data` or a [simulate] section")),
    };
    let datasets = load_data(&data_path, cfg)?;
    let selected = select_datasets(cfg, &datasets, out_dir)?;
    let doc = &selected.document;
    let diagnostics = diagnose_datasets(doc, &datasets, &cfg.years, out_dir)?;
    let rows = cfg.return_periods.iter().map(|q| evaluate_return_period(doc, q)).collect::<CliResult<Vec<_>>>()?;
    let rp_path = out_dir.join(RETURN_PERIODS_CSV);
    atomic_write(&rp_path, return_periods_csv(&rows).as_bytes())?;
    Ok(json!({
        "command": "run",
        "data": data_path.display().to_string(),
        "select": selected.summary,
        "diagnostics": diagnostics.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "return_periods": rows.iter().map(row_json).collect::<Vec<_>>(),
    }))
}
