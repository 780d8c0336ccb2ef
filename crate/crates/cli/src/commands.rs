//! The five subcommands. Each returns the bytes to emit.

use mirrorsim_core::csl::{
    crossover_check, eta_csl, gamma_exact, gamma_linear_regime, gamma_quadratic_regime,
    lambda_csl, taylor_coefficient_asymptotic, taylor_terms, CslError, Displacement,
};
use mirrorsim_core::experiment::{
    damping_exponent, f_closed_form, verify_baker_hausdorff, ExperimentParams, Source,
    VisibilityRecord,
};
use mirrorsim_core::fock::FockDimension;
use mirrorsim_core::ito::{run_suite, SuiteReport};
use mirrorsim_core::master::{visibility_series, MasterConfig};
use mirrorsim_core::stochastic::{ensemble_offdiag_in, f_factorized, SampleGrid};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{ConfigError, CslBlock, EtaSource, Format, ScenarioConfig};
use crate::output::{json_document, Cell, Table};
use crate::CliError;

pub const BH_TOLERANCE: f64 = 1e-8;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn csl_error(path: &str, e: CslError) -> CliError {
    match e {
        CslError::Quad(q) => CliError::Numerical(format!("{path}: {q}")),
        other => CliError::Config(ConfigError::new(path, other.to_string())),
    }
}

/// `η` from the config, with the unit check against the experiment when it
/// comes from CSL parameters.
pub fn resolve_eta(cfg: &ScenarioConfig) -> Result<f64, CliError> {
    match cfg.eta_source()? {
        EtaSource::Direct(eta) => Ok(eta),
        EtaSource::Csl(c) => {
            lambda_csl(&c.params, &c.profile, &cfg.experiment, c.eta_mode)
                .map_err(|e| csl_error("csl", e))?;
            Ok(eta_csl(&c.params, &c.profile, c.eta_mode)
                .map_err(|e| csl_error("csl", e))?
                .eta)
        }
    }
}

fn base_columns() -> Vec<&'static str> {
    vec!["t", "t_over_T", "f_re", "f_im", "nu", "source"]
}

fn base_cells(p: &ExperimentParams, r: &VisibilityRecord) -> Vec<Cell> {
    vec![
        Cell::Num(r.t),
        Cell::Num(r.t / p.period()),
        Cell::Num(r.f.re),
        Cell::Num(r.f.im),
        Cell::Num(r.nu),
        Cell::Text(r.source.as_str().to_string()),
    ]
}

fn emit(cfg: &ScenarioConfig, command: &str, meta: Value, table: &Table) -> Vec<u8> {
    match cfg.output.format {
        Format::Csv => table.to_csv(),
        Format::Json => json_document(command, meta, table),
    }
}

fn common_meta(cfg: &ScenarioConfig, eta: f64) -> Value {
    let p = &cfg.experiment;
    json!({
        "experiment": p,
        "eta": eta,
        "kappa": p.kappa(),
        "ell": p.ell(),
        "period": p.period(),
        "lambda": damping_exponent(p, eta),
    })
}

pub fn analytic(cfg: &ScenarioConfig) -> Result<Vec<u8>, CliError> {
    let eta = resolve_eta(cfg)?;
    let p = &cfg.experiment;
    let mut table = Table::new(base_columns());
    for t in cfg.grid.times() {
        let r = VisibilityRecord::new(t, f_closed_form(p, eta, t), Source::ClosedForm);
        table.push(base_cells(p, &r));
    }
    Ok(emit(cfg, "analytic", common_meta(cfg, eta), &table))
}

pub struct MasterRun {
    pub records: Vec<VisibilityRecord>,
    pub n_levels: usize,
    pub solver: MasterConfig,
}

pub fn run_master(cfg: &ScenarioConfig, eta: f64) -> Result<MasterRun, CliError> {
    let p = &cfg.experiment;
    let t_end = cfg.grid.t_end;
    let dim = match cfg.master.n_levels {
        Some(n) => FockDimension::new(n)
            .map_err(|e| CliError::Config(ConfigError::new("master.n_levels", e.to_string())))?,
        None => p.truncation(eta, t_end),
    };
    let mut solver = MasterConfig::default_for(p, eta, t_end);
    solver.integrator = cfg.master.integrator;
    if let Some(dt) = cfg.master.dt {
        solver.dt = dt;
    }
    solver.abs_tol = cfg.master.abs_tol;
    solver.rel_tol = cfg.master.rel_tol;
    solver.n_output = cfg.grid.n_points - 1;
    let records = visibility_series(p, eta, dim, &solver)
        .map_err(|e| CliError::Numerical(format!("master solver: {e}")))?;
    Ok(MasterRun {
        records,
        n_levels: dim.n_levels(),
        solver,
    })
}

pub fn master(cfg: &ScenarioConfig) -> Result<Vec<u8>, CliError> {
    let eta = resolve_eta(cfg)?;
    let p = &cfg.experiment;
    let run = run_master(cfg, eta)?;
    let mut cols = base_columns();
    cols.push("abs_dev");
    let mut table = Table::new(cols);
    let mut max_dev = 0.0f64;
    for r in &run.records {
        let dev = (r.f - f_closed_form(p, eta, r.t)).norm();
        max_dev = max_dev.max(dev);
        let mut row = base_cells(p, r);
        row.push(Cell::Num(dev));
        table.push(row);
    }
    let mut meta = common_meta(cfg, eta);
    meta["n_levels"] = json!(run.n_levels);
    meta["solver"] = json!(run.solver);
    meta["max_abs_dev"] = json!(max_dev);
    Ok(emit(cfg, "master", meta, &table))
}

pub fn trajectories(cfg: &ScenarioConfig) -> Result<Vec<u8>, CliError> {
    let eta = resolve_eta(cfg)?;
    let p = &cfg.experiment;
    let ens = &cfg.ensemble;
    let grid = SampleGrid::new(cfg.grid.t_end, ens.dt, cfg.grid.n_points - 1)
        .map_err(|e| CliError::Config(ConfigError::new("grid", e.to_string())))?;
    let dim = match ens.n_levels {
        Some(n) => FockDimension::new(n)
            .map_err(|e| CliError::Config(ConfigError::new("ensemble.n_levels", e.to_string())))?,
        None => p.truncation(eta, grid.t_end),
    };
    let series = ensemble_offdiag_in(ens.n_traj, ens.seed_base, p, eta, &grid, ens.scheme, dim)
        .map_err(|e| CliError::Numerical(format!("ensemble: {e}")))?;
    let mut cols = base_columns();
    cols.extend(["std_error", "std_error_re", "std_error_im", "n_traj", "scheme"]);
    let mut table = Table::new(cols);
    for pt in &series.points {
        let mut row = base_cells(p, &pt.record);
        let e = &pt.estimate;
        row.extend([
            Cell::Num(e.std_error),
            Cell::Num(e.std_error_re),
            Cell::Num(e.std_error_im),
            Cell::Int(e.n_trajectories as u64),
            Cell::Text(series.scheme.as_str().to_string()),
        ]);
        table.push(row);
    }
    let mut meta = common_meta(cfg, eta);
    meta["scheme"] = json!(series.scheme);
    meta["n_requested"] = json!(series.n_requested);
    meta["n_aborted"] = json!(series.n_aborted);
    meta["n_levels"] = json!(series.n_levels);
    meta["seed_base"] = json!(ens.seed_base);
    meta["dt"] = json!(grid.dt());
    Ok(emit(cfg, "trajectories", meta, &table))
}

fn csl_block(cfg: &ScenarioConfig) -> Result<CslBlock, CliError> {
    match cfg.eta_source()? {
        EtaSource::Csl(c) => Ok(c),
        EtaSource::Direct(_) => Err(CliError::Config(ConfigError::new(
            "csl",
            "the csl subcommand needs a `csl` block instead of `eta`",
        ))),
    }
}

/// Returns the scan output and a one-paragraph summary for stderr.
pub fn csl(cfg: &ScenarioConfig) -> Result<(Vec<u8>, String), CliError> {
    let c = csl_block(cfg)?;
    let (params, profile) = (&c.params, &c.profile);
    let eta = eta_csl(params, profile, c.eta_mode).map_err(|e| csl_error("csl", e))?;
    let lambda = lambda_csl(params, profile, &cfg.experiment, c.eta_mode)
        .map_err(|e| csl_error("csl", e))?;
    let terms = taylor_terms(profile, params.alpha);
    let c_asym = taylor_coefficient_asymptotic(profile, params.alpha);
    let crossover = crossover_check(profile, params).map_err(|e| csl_error("csl", e))?;

    let r = params.r_c();
    let n = c.scan.n_points;
    let ratio = c.scan.d_max / c.scan.d_min;
    let scan: Vec<f64> = (0..n)
        .map(|k| c.scan.d_min * ratio.powf(k as f64 / (n - 1) as f64))
        .collect();
    let gammas: Vec<Result<f64, CslError>> = scan
        .par_iter()
        .map(|&x| gamma_exact(&Displacement::along_x(x * r), profile, params))
        .collect();

    let mut table = Table::new(vec![
        "d",
        "d_sqrt_alpha",
        "gamma_exact",
        "gamma_quadratic",
        "gamma_linear",
    ]);
    for (&x, g) in scan.iter().zip(gammas) {
        let g = g.map_err(|e| csl_error("csl", e))?;
        let d = x * r;
        table.push(vec![
            Cell::Num(d),
            Cell::Num(x),
            Cell::Num(g),
            Cell::Num(gamma_quadratic_regime(d, params, terms.c)),
            Cell::Num(gamma_linear_regime(d, params, profile)),
        ]);
    }
    let meta = json!({
        "eta": eta.eta,
        "formula": eta.formula,
        "lambda": lambda,
        "c_exact": terms.c,
        "c_asymptotic": c_asym,
        "i3": terms.i3,
        "i12": terms.i12,
        "crossover": crossover,
        "coherence_loss_below_1e-8": lambda < 1e-8,
    });
    let summary = format!(
        "eta = {:e} ({:?} C), Lambda = {:e}, crossover predicted {:e}, observed {:e} (ratio {:.3}, within band: {})",
        eta.eta,
        eta.formula,
        lambda,
        crossover.predicted,
        crossover.observed,
        crossover.ratio,
        crossover.within_band
    );
    Ok((emit(cfg, "csl", meta, &table), summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BhPoint {
    pub t: f64,
    pub residual: f64,
    pub adjoint_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BhReport {
    pub kappa: f64,
    pub n_levels: usize,
    pub tolerance: f64,
    pub points: Vec<BhPoint>,
    pub max_residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleReport {
    pub n_points: usize,
    pub n_levels: usize,
    /// Largest `|f_master − f_closed|`.
    pub master_max_abs_dev: f64,
    pub master_tol: f64,
    pub master_passed: bool,
    /// Largest `|f_D f_S − f_closed|`.
    pub factorized_max_abs_dev: f64,
    pub factorized_tol: f64,
    pub factorized_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub passed: bool,
    pub baker_hausdorff: BhReport,
    pub ito: SuiteReport,
    pub oracle: OracleReport,
}

pub fn parse_report(text: &str) -> Result<VerifyReport, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn verify(cfg: &ScenarioConfig) -> Result<VerifyReport, CliError> {
    let eta = resolve_eta(cfg)?;
    let p = &cfg.experiment;
    let v = &cfg.verify;

    let dim = FockDimension::new(v.bh_n_levels)
        .map_err(|e| CliError::Config(ConfigError::new("verify.bh_n_levels", e.to_string())))?;
    let n = v.bh_points;
    let times: Vec<f64> = (1..=n)
        .map(|k| 2.0 * p.period() * k as f64 / n as f64)
        .collect();
    let points = times
        .par_iter()
        .map(|&t| {
            verify_baker_hausdorff(p, t, dim).map(|c| BhPoint {
                t,
                residual: c.residual,
                adjoint_residual: c.adjoint_residual,
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Numerical(format!("Baker–Hausdorff check: {e}")))?;
    let max_residual = points
        .iter()
        .map(|q| q.residual.max(q.adjoint_residual))
        .fold(0.0, f64::max);
    let bh = BhReport {
        kappa: p.kappa(),
        n_levels: v.bh_n_levels,
        tolerance: BH_TOLERANCE,
        points,
        max_residual,
        passed: max_residual <= BH_TOLERANCE,
    };

    let ito = run_suite(&v.ito).map_err(|e| CliError::Numerical(format!("Itô suite: {e}")))?;

    let run = run_master(cfg, eta)?;
    let master_dev = run
        .records
        .iter()
        .map(|r| (r.f - f_closed_form(p, eta, r.t)).norm())
        .fold(0.0, f64::max);
    let fact_dev = cfg
        .grid
        .times()
        .iter()
        .map(|&t| {
            let f: Complex64 = f_factorized(p, eta, t).f;
            (f - f_closed_form(p, eta, t)).norm()
        })
        .fold(0.0, f64::max);
    let oracle = OracleReport {
        n_points: cfg.grid.n_points,
        n_levels: run.n_levels,
        master_max_abs_dev: master_dev,
        master_tol: v.master_tol,
        master_passed: master_dev <= v.master_tol,
        factorized_max_abs_dev: fact_dev,
        factorized_tol: v.factorized_tol,
        factorized_passed: fact_dev <= v.factorized_tol,
    };
    let passed = bh.passed && ito.passed && oracle.master_passed && oracle.factorized_passed;
    Ok(VerifyReport {
        schema_version: REPORT_SCHEMA_VERSION,
        passed,
        baker_hausdorff: bh,
        ito,
        oracle,
    })
}
