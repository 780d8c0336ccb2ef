//! Scenario configuration: JSON file, dotted-path overrides, validation.

use std::f64::consts::PI;

use mirrorsim_core::csl::{CslParams, DensityProfile, EtaMode};
use mirrorsim_core::experiment::ExperimentParams;
use mirrorsim_core::ito::McSettings;
use mirrorsim_core::master::Integrator;
use mirrorsim_core::stochastic::Scheme;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{path}: {message}")]
pub struct ConfigError {
    /// Dotted path of the offending field, `<root>` for the whole document.
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub experiment: ExperimentParams,
    /// Collapse rate `η`; mutually exclusive with `csl`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csl: Option<CslBlock>,
    pub grid: GridConfig,
    #[serde(default)]
    pub master: MasterBlock,
    #[serde(default)]
    pub ensemble: EnsembleBlock,
    #[serde(default)]
    pub verify: VerifyBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CslBlock {
    pub params: CslParams,
    pub profile: DensityProfile,
    #[serde(default)]
    pub eta_mode: EtaMode,
    #[serde(default)]
    pub scan: ScanConfig,
}

/// Log-spaced displacement scan, in units of `1/√α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub d_min: f64,
    pub d_max: f64,
    pub n_points: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            d_min: 0.01,
            d_max: 30.0,
            n_points: 41,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_end: f64,
    pub n_points: usize,
}

impl GridConfig {
    pub fn times(&self) -> Vec<f64> {
        let n = self.n_points - 1;
        (0..=n).map(|k| self.t_end * k as f64 / n as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MasterBlock {
    pub integrator: Integrator,
    /// Step size; the solver default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Fock truncation; the truncation rule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_levels: Option<usize>,
}

impl Default for MasterBlock {
    fn default() -> Self {
        MasterBlock {
            integrator: Integrator::Rk4,
            dt: None,
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            n_levels: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleBlock {
    pub n_traj: usize,
    pub seed_base: u64,
    pub scheme: Scheme,
    /// Largest Euler–Maruyama step.
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_levels: Option<usize>,
}

impl Default for EnsembleBlock {
    fn default() -> Self {
        EnsembleBlock {
            n_traj: 1000,
            seed_base: 0,
            scheme: Scheme::Linear,
            dt: 1e-3,
            n_levels: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyBlock {
    pub ito: McSettings,
    pub bh_n_levels: usize,
    pub bh_points: usize,
    /// Bound on the master-vs-closed-form relative deviation of `|f|`.
    pub master_tol: f64,
    pub factorized_tol: f64,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        VerifyBlock {
            ito: McSettings {
                n_paths: 20_000,
                n_steps: 500,
                seed_base: 0,
            },
            bh_n_levels: 60,
            bh_points: 20,
            master_tol: 1e-6,
            factorized_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    /// Standard output when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default)]
    pub format: Format,
}

/// Where `η` comes from after validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaSource {
    Direct(f64),
    Csl(CslBlock),
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            experiment: ExperimentParams::dimensionless(0.5),
            eta: Some(0.1),
            csl: None,
            grid: GridConfig {
                t_end: 4.0 * PI,
                n_points: 200,
            },
            master: MasterBlock::default(),
            ensemble: EnsembleBlock::default(),
            verify: VerifyBlock::default(),
            output: OutputBlock::default(),
        }
    }
}

fn finite_positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("must be finite and > 0 (got {v})")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::new(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        self.experiment
            .validate()
            .map_err(|e| ConfigError::new("experiment", e.to_string()))?;
        self.eta_source()?;
        if let Some(c) = &self.csl {
            c.params
                .validate()
                .map_err(|e| ConfigError::new("csl.params", e.to_string()))?;
            c.profile
                .validate()
                .map_err(|e| ConfigError::new("csl.profile", e.to_string()))?;
            finite_positive("csl.scan.d_min", c.scan.d_min)?;
            finite_positive("csl.scan.d_max", c.scan.d_max)?;
            if c.scan.d_max < c.scan.d_min {
                return Err(ConfigError::new("csl.scan.d_max", "must be ≥ d_min"));
            }
            if c.scan.n_points < 2 {
                return Err(ConfigError::new("csl.scan.n_points", "must be ≥ 2"));
            }
            if let EtaMode::Auto { threshold } = c.eta_mode {
                finite_positive("csl.eta_mode.auto.threshold", threshold)?;
            }
        }
        finite_positive("grid.t_end", self.grid.t_end)?;
        if self.grid.n_points < 2 {
            return Err(ConfigError::new(
                "grid.n_points",
                format!("must be ≥ 2 (got {})", self.grid.n_points),
            ));
        }
        if let Some(dt) = self.master.dt {
            finite_positive("master.dt", dt)?;
        }
        finite_positive("master.abs_tol", self.master.abs_tol)?;
        finite_positive("master.rel_tol", self.master.rel_tol)?;
        if self.master.n_levels.is_some_and(|n| n < 2) {
            return Err(ConfigError::new("master.n_levels", "must be ≥ 2"));
        }
        if self.ensemble.n_levels.is_some_and(|n| n < 2) {
            return Err(ConfigError::new("ensemble.n_levels", "must be ≥ 2"));
        }
        finite_positive("ensemble.dt", self.ensemble.dt)?;
        if self.ensemble.n_traj < 2 {
            return Err(ConfigError::new("ensemble.n_traj", "must be ≥ 2"));
        }
        let v = &self.verify;
        if v.ito.n_paths < 2 {
            return Err(ConfigError::new("verify.ito.n_paths", "must be ≥ 2"));
        }
        if v.ito.n_steps == 0 {
            return Err(ConfigError::new("verify.ito.n_steps", "must be ≥ 1"));
        }
        if v.bh_n_levels < 2 {
            return Err(ConfigError::new("verify.bh_n_levels", "must be ≥ 2"));
        }
        if v.bh_points == 0 {
            return Err(ConfigError::new("verify.bh_points", "must be ≥ 1"));
        }
        finite_positive("verify.master_tol", v.master_tol)?;
        finite_positive("verify.factorized_tol", v.factorized_tol)?;
        Ok(())
    }

    pub fn eta_source(&self) -> Result<EtaSource, ConfigError> {
        match (self.eta, &self.csl) {
            (Some(eta), None) => {
                if eta.is_finite() && eta >= 0.0 {
                    Ok(EtaSource::Direct(eta))
                } else {
                    Err(ConfigError::new("eta", format!("must be finite and ≥ 0 (got {eta})")))
                }
            }
            (None, Some(c)) => Ok(EtaSource::Csl(*c)),
            (Some(_), Some(_)) => Err(ConfigError::new(
                "<root>",
                "give exactly one of `eta` and `csl`, not both",
            )),
            (None, None) => Err(ConfigError::new("<root>", "one of `eta` or `csl` is required")),
        }
    }
}

/// Parses a JSON document into a validated config.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| ConfigError::new("<root>", e.to_string()))?;
    from_value(value)
}

pub fn from_value(value: Value) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "<root>".to_string() } else { path };
        ConfigError::new(path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// A `key.path=value` override. The value is read as JSON when it parses
/// as JSON and as a bare string otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

pub fn parse_override(arg: &str) -> Result<Override, ConfigError> {
    let Some((key, raw)) = arg.split_once('=') else {
        return Err(ConfigError::new(arg, "override must look like key.path=value"));
    };
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::new("<root>", "override key is empty"));
    }
    let path: Vec<String> = key.split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(ConfigError::new(key, "empty path segment"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(Override { path, value })
}

/// Sets `path` inside `doc`, creating intermediate objects. `null` removes
/// the key.
pub fn apply_override(doc: &mut Value, o: &Override) -> Result<(), ConfigError> {
    let joined = o.path.join(".");
    let (last, parents) = o.path.split_last().expect("non-empty path");
    let mut node = doc;
    for (i, seg) in parents.iter().enumerate() {
        let Value::Object(map) = node else {
            return Err(ConfigError::new(
                o.path[..i].join("."),
                "cannot descend into a non-object",
            ));
        };
        node = map
            .entry(seg.clone())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    let Value::Object(map) = node else {
        return Err(ConfigError::new(joined, "parent is not an object"));
    };
    if o.value.is_null() {
        map.remove(last);
    } else {
        map.insert(last.clone(), o.value.clone());
    }
    Ok(())
}

/// Default document, optional file, then overrides in order.
pub fn load(text: Option<&str>, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    let mut doc = match text {
        Some(t) => {
            serde_json::from_str(t).map_err(|e| ConfigError::new("<root>", e.to_string()))?
        }
        None => serde_json::to_value(ScenarioConfig::default()).expect("default serializes"),
    };
    for arg in overrides {
        apply_override(&mut doc, &parse_override(arg)?)?;
    }
    from_value(doc)
}
