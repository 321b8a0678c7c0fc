//! Command-line front end: argument parsing and dispatch.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use ggseason::design::{ModelStructure, SelectionMode};
use ggseason::inference::Kernel;

use crate::config::{ReturnPeriodQuery, RunConfig, SimulateConfig, StrategyName};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "ggseason", version, about = "Seasonal generalized gamma models for daily series")]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// TOML config; flags given here override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub period: Option<f64>,
    /// HAC bandwidth in days.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub kernel: Option<Kernel>,
    /// Confidence level for reported intervals.
    #[arg(long)]
    pub level: Option<f64>,
    /// Restrict to these stations (repeatable).
    #[arg(long = "station")]
    pub stations: Vec<String>,
}

#[derive(Debug, Args, Default)]
pub struct SelectFlags {
    #[arg(long)]
    pub mode: Option<SelectionMode>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub strategy: Option<StrategyName>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one structure and write the model JSON.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        structure: ModelStructure,
        /// Defaults to model.json in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Stepwise structure search; writes path.csv, path.json and model.json.
    Select {
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        select: SelectFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Residual z-scores, QQ data and parameter curves.
    Diagnose {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Calendar years for the parameter curves.
        #[arg(long, value_delimiter = ',')]
        years: Vec<i32>,
        #[command(flatten)]
        common: Common,
    },
    /// Return period in years of a level on a given date.
    ReturnPeriod {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        date: NaiveDate,
        #[arg(long, conflicts_with = "quantile", required_unless_present = "quantile")]
        value: Option<f64>,
        /// Use this quantile of the fitted distribution as the level.
        #[arg(long)]
        quantile: Option<f64>,
        #[arg(long)]
        station: Option<String>,
    },
    /// Simulate a daily series from a model JSON or explicit coefficients.
    Simulate {
        #[arg(long, conflicts_with_all = ["structure", "coefficients"])]
        model: Option<PathBuf>,
        #[arg(long, requires = "coefficients")]
        structure: Option<ModelStructure>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        coefficients: Option<Vec<f64>>,
        #[arg(long)]
        start: NaiveDate,
        #[arg(long)]
        days: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        ar_phi: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "sim")]
        station_name: String,
        #[arg(long, default_value_t = ggseason::design::DEFAULT_PERIOD)]
        period: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline from a config: simulate, select, diagnose, return periods.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn base_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &common.out_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = common.period {
        cfg.period = v;
    }
    if let Some(v) = common.bandwidth {
        cfg.bandwidth = v;
    }
    if let Some(v) = common.kernel {
        cfg.kernel = v;
    }
    if let Some(v) = common.level {
        cfg.level = v;
    }
    if !common.stations.is_empty() {
        cfg.stations = common.stations.clone();
    }
    Ok(cfg)
}

fn apply_select(cfg: &mut RunConfig, s: &SelectFlags) {
    if let Some(v) = s.mode {
        cfg.mode = v;
    }
    if let Some(v) = s.patience {
        cfg.patience = v;
    }
    if let Some(v) = s.max_steps {
        cfg.max_steps = v;
    }
    if let Some(v) = s.strategy {
        cfg.strategy = v;
    }
    if let Some(v) = s.tolerance {
        cfg.tolerance = v;
    }
}

/// Executes a parsed command and returns its JSON summary.
pub fn execute(command: Command) -> CliResult<Value> {
    match command {
        Command::Fit { data, structure, out, common } => {
            let cfg = base_config(&common)?;
            cfg.validate()?;
            let out = out.unwrap_or_else(|| cfg.output_dir.join(commands::MODEL_JSON));
            commands::cmd_fit(&cfg, &data, &structure, &out)
        }
        Command::Select { data, select, common } => {
            let mut cfg = base_config(&common)?;
            apply_select(&mut cfg, &select);
            cfg.validate()?;
            let data = data.or_else(|| cfg.data.clone()).ok_or_else(|| CliError::config("select needs --data or `data` in the config"))?;
            commands::cmd_select(&cfg, &data)
        }
        Command::Diagnose { model, data, years, common } => {
            let mut cfg = base_config(&common)?;
            if !years.is_empty() {
                cfg.years = years;
            }
            cfg.validate()?;
            commands::cmd_diagnose(&cfg, &model, &data)
        }
        Command::ReturnPeriod { model, date, value, quantile, station } => {
            let query = ReturnPeriodQuery { date, value, quantile, station };
            let cfg = RunConfig { return_periods: vec![query.clone()], ..Default::default() };
            cfg.validate()?;
            commands::cmd_return_period(&model, &query)
        }
        Command::Simulate { model, structure, coefficients, start, days, ar_phi, seed, station_name, period, out } => {
            let sim = SimulateConfig { model, structure, coefficients, start, days, ar_phi, seed, station: station_name };
            let cfg = RunConfig { period, simulate: Some(sim.clone()), ..Default::default() };
            cfg.validate()?;
            commands::cmd_simulate(&sim, period, &out)
        }
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            cfg.validate()?;
            commands::cmd_run(&cfg)
        }
    }
}
