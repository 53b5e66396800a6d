//! Command-line driver for `birkhoff-lab`: loads an experiment
//! configuration, runs one subcommand and writes CSV tables, a JSON summary
//! and a run manifest.

pub mod commands;
pub mod config;
pub mod output;
pub mod plots;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{ExperimentConfig, Format};
use crate::output::{Diagnostic, Report, RunManifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Core(#[from] birkhoff_lab::Error),
}

impl CliError {
    /// 2 for configuration and file problems, 4 for numerical failures,
    /// 3 for everything else the toolkit rejects.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Schema(_) => 2,
            CliError::Core(e) if e.is_numerical() => 4,
            CliError::Core(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Schema(_) => "schema",
            CliError::Core(e) if e.is_numerical() => "numerical",
            CliError::Core(birkhoff_lab::Error::Hypothesis(_)) => "hypothesis",
            CliError::Core(_) => "precondition",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "birkhoff-lab", version, about = "Limit-theorem experiments for Birkhoff sums")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to the config file, then to all cores.
    #[arg(long, global = true, env = "BIRKHOFF_LAB_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Also write a gnuplot script for the results.
    #[arg(long, global = true)]
    pub plots: bool,
    /// Override a config key, e.g. `--set stats.m=5000`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Raw Birkhoff sums.
    Simulate,
    /// Mean, Green–Kubo variance and third cumulant.
    Variance,
    /// Kolmogorov distance to the normal law along the n grid.
    Clt,
    /// Gaussian against first-order Edgeworth CDF errors.
    Edgeworth,
    /// Mixing local limit theorem on a window grid.
    Mlclt,
    /// Leading eigenvalue of the twisted transfer operator.
    Spectrum(SpectrumArgs),
    /// Doeblin–Fortet–Lasota–Yorke sweep and the L^γ bound.
    Dfly,
    /// Sufficient conditions of the limit theorems.
    Conditions,
    /// Periodic-orbit cohomology and arithmeticity heuristic.
    Coboundary,
    /// Mean and limit laws of zeta along the Boolean orbit.
    Lindelof,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Variance => "variance",
            Command::Clt => "clt",
            Command::Edgeworth => "edgeworth",
            Command::Mlclt => "mlclt",
            Command::Spectrum(_) => "spectrum",
            Command::Dfly => "dfly",
            Command::Conditions => "conditions",
            Command::Coboundary => "coboundary",
            Command::Lindelof => "lindelof",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SpectrumArgs {
    /// Map descriptor as an inline TOML table, e.g. `{kind = "doubling"}`.
    #[arg(long)]
    pub map: Option<String>,
    /// Observable descriptor as an inline TOML table.
    #[arg(long)]
    pub observable: Option<String>,
    /// Comma-separated s values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub s_grid: Option<Vec<f64>>,
    /// Ulam cells.
    #[arg(long = "N")]
    pub cells: Option<usize>,
}

/// Config overrides implied by command-specific flags.
fn command_overrides(command: &Command) -> Vec<String> {
    let mut out = Vec::new();
    if let Command::Spectrum(args) = command {
        if let Some(m) = &args.map {
            out.push(format!("system={m}"));
        }
        if let Some(o) = &args.observable {
            out.push(format!("observable={o}"));
        }
        if let Some(s) = &args.s_grid {
            let list: Vec<String> = s.iter().map(|v| format!("{v:?}")).collect();
            out.push(format!("spectrum.s_grid=[{}]", list.join(",")));
        }
        if let Some(n) = args.cells {
            out.push(format!("spectrum.cells={n}"));
        }
    }
    out
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let text = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?.1,
        None => String::new(),
    };
    let mut overrides = command_overrides(&cli.command);
    overrides.extend(cli.overrides.iter().cloned());
    let mut cfg = ExperimentConfig::from_sources(&text, &overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(dir) = &cli.out_dir {
        cfg.output.dir = dir.clone();
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    if cli.plots {
        cfg.output.plots = true;
    }
    Ok(cfg)
}

/// Result of [`run`]: the exit status and the files written.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub outputs: Vec<PathBuf>,
    pub report: Option<Report>,
    pub error: Option<String>,
}

fn execute(command: &Command, cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let threads = cfg.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| match command {
        Command::Simulate => commands::simulate(cfg),
        Command::Variance => commands::variance(cfg),
        Command::Clt => commands::clt(cfg),
        Command::Edgeworth => commands::edgeworth(cfg),
        Command::Mlclt => commands::mlclt(cfg),
        Command::Spectrum(_) => commands::spectrum(cfg),
        Command::Dfly => commands::dfly(cfg),
        Command::Conditions => commands::conditions(cfg),
        Command::Coboundary => commands::coboundary(cfg),
        Command::Lindelof => commands::lindelof(cfg),
    })
}

fn persist(
    command: &str,
    cfg: &ExperimentConfig,
    result: &Result<Report, CliError>,
    started: Instant,
) -> Result<Vec<PathBuf>, CliError> {
    let dir = &cfg.output.dir;
    let format = cfg.output.format;
    let mut outputs = Vec::new();
    let empty = Report::default();
    let report = result.as_ref().unwrap_or(&empty);
    if format.csv() {
        for t in &report.tables {
            outputs.push(output::write_text(dir, &t.file_name(), &t.to_csv())?);
        }
    }
    for (name, doc) in &report.documents {
        outputs.push(output::write_json(dir, name, doc)?);
    }
    let mut warnings = report.warnings.clone();
    if cfg.output.plots && result.is_ok() {
        let (script, w) = plots::emit_plots(dir)?;
        warnings.extend(w);
        outputs.extend(script);
    }
    let exit_code = result.as_ref().err().map_or(0, CliError::exit_code);
    if format.json() || result.is_err() {
        let mut summary = serde_json::Map::new();
        summary.insert("command".into(), command.into());
        summary.insert("status".into(), if exit_code == 0 { "ok" } else { "error" }.into());
        summary.insert("exit_code".into(), exit_code.into());
        match result {
            Ok(r) => {
                summary.insert("results".into(), serde_json::Value::Object(r.summary.clone()));
                if !format.csv() {
                    let tables: serde_json::Map<_, _> =
                        r.tables.iter().map(|t| (t.name.clone(), output::table_json(t))).collect();
                    summary.insert("tables".into(), serde_json::Value::Object(tables));
                }
            }
            Err(e) => {
                summary.insert("error".into(), output::error_record(e));
            }
        }
        summary.insert("warnings".into(), serde_json::to_value(&warnings).unwrap_or_default());
        summary.insert(
            "diagnostics".into(),
            serde_json::to_value(&report.diagnostics).unwrap_or_default(),
        );
        outputs.push(output::write_json(dir, "summary.json", &summary)?);
    }
    let mut diagnostics = report.diagnostics.clone();
    if let Err(e) = result {
        diagnostics.push(Diagnostic::failed(command, e));
    }
    let resolved = cfg.resolved();
    let mut seeds = vec![cfg.seed];
    seeds.extend(report.seeds.iter().filter(|s| **s != cfg.seed));
    let mut names: Vec<String> = outputs
        .iter()
        .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
        .collect();
    names.push("manifest.json".into());
    let manifest = RunManifest {
        command: command.into(),
        config_hash: output::config_hash(&cfg.identity()),
        toolkit_version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        seeds,
        diagnostics,
        outputs: names,
        resolved_config: resolved,
        exit_code,
    };
    outputs.push(output::write_json(dir, "manifest.json", &manifest)?);
    Ok(outputs)
}

/// Runs one subcommand end to end. Errors never panic; they become an
/// exit code and, where an output directory is known, an error record.
pub fn run(cli: &Cli) -> RunOutcome {
    let started = Instant::now();
    let command = cli.command.name();
    let cfg = match resolve_config(cli) {
        Ok(c) => c,
        Err(e) => {
            let mut outputs = Vec::new();
            if let Some(dir) = &cli.out_dir {
                let record = serde_json::json!({
                    "command": command,
                    "status": "error",
                    "exit_code": e.exit_code(),
                    "error": output::error_record(&e),
                });
                if let Ok(p) = output::write_json(dir, "summary.json", &record) {
                    outputs.push(p);
                }
            }
            return RunOutcome {
                exit_code: e.exit_code(),
                outputs,
                report: None,
                error: Some(e.to_string()),
            };
        }
    };
    let result = execute(&cli.command, &cfg);
    let error = result.as_ref().err().map(|e| e.to_string());
    match persist(command, &cfg, &result, started) {
        Ok(outputs) => RunOutcome {
            exit_code: result.as_ref().err().map_or(0, CliError::exit_code),
            outputs,
            report: result.ok(),
            error,
        },
        Err(e) => RunOutcome {
            exit_code: e.exit_code(),
            outputs: Vec::new(),
            report: result.ok(),
            error: Some(match error {
                Some(first) => format!("{first}; {e}"),
                None => e.to_string(),
            }),
        },
    }
}

/// Parses `args` (program name first) and runs.
pub fn run_from<I, T>(args: I) -> RunOutcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            RunOutcome {
                exit_code: code,
                outputs: Vec::new(),
                report: None,
                error: Some(e.render().to_string()),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        use birkhoff_lab::Error;
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Core(Error::Hypothesis("x".into())).exit_code(), 3);
        assert_eq!(CliError::Core(Error::Precondition("x".into())).exit_code(), 3);
        assert_eq!(CliError::Core(Error::TailBias { rejected: 1, draws: 2 }).exit_code(), 4);
        assert_eq!(
            CliError::Core(Error::Iteration { iterations: 1, residual: 1.0 }).exit_code(),
            4
        );
    }

    #[test]
    fn spectrum_flags_become_overrides() {
        let cli = Cli::try_parse_from([
            "birkhoff-lab",
            "spectrum",
            "--map",
            "{kind = \"doubling\"}",
            "--s-grid",
            "-0.1,0,0.1",
            "--N",
            "64",
        ])
        .unwrap();
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!(cfg.spectrum.s_grid, vec![-0.1, 0.0, 0.1]);
        assert_eq!(cfg.spectrum.cells, 64);
    }
}
