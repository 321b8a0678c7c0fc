//! TOML run configuration.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use ggseason::design::{LinkSpec, ModelStructure, SelectionMode, DEFAULT_PERIOD};
use ggseason::inference::{HacOptions, Kernel, DEFAULT_BANDWIDTH};
use ggseason::selection::{FinalStrategy, SelectionOptions, DEFAULT_MAX_STEPS, DEFAULT_PARSIMONY_TOLERANCE, DEFAULT_PATIENCE};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyName {
    TicOptimal,
    #[default]
    Parsimonious,
}

impl std::str::FromStr for StrategyName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tic-optimal" => Ok(StrategyName::TicOptimal),
            "parsimonious" => Ok(StrategyName::Parsimonious),
            other => Err(format!("unknown strategy '{other}'")),
        }
    }
}

/// Synthetic data generation for end-to-end runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Model JSON to simulate from; alternative to `structure` + `coefficients`.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub structure: Option<ModelStructure>,
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
    pub start: NaiveDate,
    pub days: usize,
    #[serde(default)]
    pub ar_phi: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sim_station")]
    pub station: String,
}

fn default_sim_station() -> String {
    "sim".into()
}

/// A level, or a quantile of the fitted distribution on `date`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReturnPeriodQuery {
    pub date: NaiveDate,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub quantile: Option<f64>,
    #[serde(default)]
    pub station: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub mode: SelectionMode,
    pub links: LinkSpec,
    pub period: f64,
    pub bandwidth: f64,
    pub kernel: Kernel,
    pub patience: usize,
    pub max_steps: usize,
    pub strategy: StrategyName,
    pub tolerance: f64,
    /// Empty selects every station in the data.
    pub stations: Vec<String>,
    pub level: f64,
    /// Calendar years for parameter curves.
    pub years: Vec<i32>,
    pub simulate: Option<SimulateConfig>,
    pub return_periods: Vec<ReturnPeriodQuery>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            output_dir: PathBuf::from("ggseason-out"),
            mode: SelectionMode::PurelySeasonal,
            links: LinkSpec::default(),
            period: DEFAULT_PERIOD,
            bandwidth: DEFAULT_BANDWIDTH,
            kernel: Kernel::TukeyHanning,
            patience: DEFAULT_PATIENCE,
            max_steps: DEFAULT_MAX_STEPS,
            strategy: StrategyName::Parsimonious,
            tolerance: DEFAULT_PARSIMONY_TOLERANCE,
            stations: Vec::new(),
            level: 0.95,
            years: Vec::new(),
            simulate: None,
            return_periods: Vec::new(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::config(e.message().to_string()))?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = cfg.data.as_mut() {
            resolve(base, d);
        }
        resolve(base, &mut cfg.output_dir);
        if let Some(m) = cfg.simulate.as_mut().and_then(|s| s.model.as_mut()) {
            resolve(base, m);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("period", self.period)?;
        positive("bandwidth", self.bandwidth)?;
        positive("tolerance", self.tolerance)?;
        if self.patience == 0 {
            return Err(CliError::config("patience must be positive"));
        }
        if self.max_steps == 0 {
            return Err(CliError::config("max_steps must be positive"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::config(format!("level must lie in (0, 1), got {}", self.level)));
        }
        if self.links != LinkSpec::default() {
            return Err(CliError::config("links are fixed to log/log/identity"));
        }
        if let Some(s) = &self.simulate {
            if s.days == 0 {
                return Err(CliError::config("simulate.days must be positive"));
            }
            match (&s.model, &s.structure, &s.coefficients) {
                (Some(_), None, None) | (None, Some(_), Some(_)) => {}
                _ => return Err(CliError::config("simulate needs either `model` or both `structure` and `coefficients`")),
            }
        }
        for q in &self.return_periods {
            match (q.value, q.quantile) {
                (Some(v), None) if v > 0.0 && v.is_finite() => {}
                (None, Some(p)) if p > 0.0 && p < 1.0 => {}
                _ => return Err(CliError::config(format!("return period on {} needs a positive value or a quantile in (0, 1)", q.date))),
            }
        }
        Ok(())
    }

    pub fn hac(&self) -> HacOptions {
        HacOptions { bandwidth: self.bandwidth, kernel: self.kernel }
    }

    pub fn selection(&self) -> SelectionOptions {
        SelectionOptions {
            mode: self.mode,
            patience: self.patience,
            max_steps: self.max_steps,
            hac: self.hac(),
            ..Default::default()
        }
    }

    pub fn final_strategy(&self) -> FinalStrategy {
        match self.strategy {
            StrategyName::TicOptimal => FinalStrategy::TicOptimal,
            StrategyName::Parsimonious => FinalStrategy::Parsimonious { tolerance: self.tolerance },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_parsing() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
        let cfg = RunConfig::from_toml(
            r#"
mode = "dynamic"
kernel = "bartlett"
bandwidth = 60
strategy = "tic-optimal"
stations = ["B", "C"]

[simulate]
structure = "mu=(1,-);sigma=(0,-);nu=(0,-)"
coefficients = [1.0, 0.5, 0.0, -1.0, 0.0]
start = "1990-01-01"
days = 100

[[return_periods]]
date = "1990-06-01"
quantile = 0.5
"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.mode, SelectionMode::Dynamic);
        assert_eq!(cfg.hac().bandwidth, 60.0);
        assert_eq!(cfg.final_strategy(), FinalStrategy::TicOptimal);
        assert_eq!(cfg.simulate.unwrap().station, "sim");
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("mode = \"weekly\"").is_err());
        assert!(RunConfig::from_toml("unknown_key = 1").is_err());
        for bad in ["bandwidth = -1.0", "period = 0.0", "patience = 0", "level = 1.5"] {
            let cfg = RunConfig::from_toml(bad).unwrap();
            assert_eq!(cfg.validate().unwrap_err().exit_code(), 4, "{bad}");
        }
        let cfg = RunConfig::from_toml("[[return_periods]]\ndate = \"1990-01-01\"\n").unwrap();
        assert!(cfg.validate().is_err());
    }
}
