//! Command-line front end: config loading, subcommand dispatch, output.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use config::{ConfigError, ScenarioConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Verification(_) => EXIT_VERIFICATION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "mirrorsim", version, about = "Mirror-superposition visibility under collapse models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON scenario file; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set ensemble.n_traj=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    pub format: Option<FormatArg>,
    /// Seed base for every Monte Carlo stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Closed-form f(t) and visibility.
    Analytic,
    /// Master-equation series with deviation from the closed form.
    Master,
    /// Stochastic-unravelling ensemble with standard errors.
    Trajectories,
    /// CSL rate, damping exponent, Γ(d) scan and crossover report.
    Csl,
    /// Operator identity, Itô and oracle-equivalence suites (JSON report).
    Verify,
    /// Print the effective configuration as JSON.
    ShowConfig,
}

pub fn effective_config(cli: &Cli) -> Result<ScenarioConfig, CliError> {
    let text = match &cli.config {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(ConfigError::new("--config", format!("{}: {e}", path.display())))
        })?),
        None => None,
    };
    let mut cfg = config::load(text.as_deref(), &cli.set)?;
    if let Some(out) = &cli.out {
        cfg.output.path = Some(out.display().to_string());
    }
    if let Some(f) = cli.format {
        cfg.output.format = match f {
            FormatArg::Csv => config::Format::Csv,
            FormatArg::Json => config::Format::Json,
        };
    }
    if let Some(seed) = cli.seed {
        cfg.ensemble.seed_base = seed;
        cfg.verify.ito.seed_base = seed;
    }
    Ok(cfg)
}

fn write_output(cfg: &ScenarioConfig, bytes: &[u8], stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cfg.output.path {
        Some(path) => std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{path}: {e}"))),
        None => stdout.write_all(bytes).map_err(|e| CliError::Io(e.to_string())),
    }
}

/// What a subcommand produced, before anything is written.
struct Emission {
    bytes: Vec<u8>,
    note: Option<String>,
    failed_checks: bool,
}

fn compute(command: Command, cfg: &ScenarioConfig) -> Result<Emission, CliError> {
    let plain = |bytes| Emission {
        bytes,
        note: None,
        failed_checks: false,
    };
    Ok(match command {
        Command::Analytic => plain(commands::analytic(cfg)?),
        Command::Master => plain(commands::master(cfg)?),
        Command::Trajectories => plain(commands::trajectories(cfg)?),
        Command::Csl => {
            let (bytes, summary) = commands::csl(cfg)?;
            Emission {
                bytes,
                note: Some(summary),
                failed_checks: false,
            }
        }
        Command::Verify => {
            let report = commands::verify(cfg)?;
            let mut bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
            bytes.push(b'\n');
            Emission {
                bytes,
                note: None,
                failed_checks: !report.passed,
            }
        }
        Command::ShowConfig => {
            let mut bytes = serde_json::to_vec_pretty(cfg).expect("config serializes");
            bytes.push(b'\n');
            plain(bytes)
        }
    })
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let cfg = effective_config(cli)?;
    let emission = match cli.threads {
        Some(0) => return Err(CliError::Config(ConfigError::new("--threads", "must be ≥ 1"))),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(ConfigError::new("--threads", e.to_string())))?
            .install(|| compute(cli.command, &cfg))?,
        None => compute(cli.command, &cfg)?,
    };
    if let Some(note) = &emission.note {
        let _ = writeln!(stderr, "{note}");
    }
    write_output(&cfg, &emission.bytes, stdout)?;
    if emission.failed_checks {
        return Err(CliError::Verification(
            "one or more checks failed; see the report".into(),
        ));
    }
    Ok(())
}

/// Runs the CLI on `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = dispatch(&cli, stdout, stderr);
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
