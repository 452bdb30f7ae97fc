//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 2 unreadable or unparsable config, 3 invalid
//! config, 4 solver failure (with `error.json` in the output directory).

pub mod config;
pub mod manifest;
pub mod profiles;
pub mod run;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::error::Error;
pub use config::ExperimentConfig;
use manifest::{read_manifest, sha256_hex, Manifest, CONFIG_COPY, MANIFEST_FILE};

pub const EXIT_PARSE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "nullcontrol",
    version,
    about = "Null-control and Carleman-weight experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// Experiment config (TOML).
    pub config: PathBuf,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Evaluate independent sweep points in parallel.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Weight tables and property checks.
    WeightsAudit(RunArgs),
    /// Forward and adjoint trajectories.
    Solve(RunArgs),
    /// Carleman sweeps and the weighted extremal problem.
    CarlemanAudit(RunArgs),
    /// Penalized HUM at a single epsilon.
    Hum(RunArgs),
    /// Penalized HUM over the epsilon list.
    Sweep(RunArgs),
    /// Fixed-point control of the semilinear problem.
    Semilinear(RunArgs),
    /// Verify a completed run directory and print its manifest.
    Manifest { run_dir: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::WeightsAudit(_) => "weights-audit",
            Command::Solve(_) => "solve",
            Command::CarlemanAudit(_) => "carleman-audit",
            Command::Hum(_) => "hum",
            Command::Sweep(_) => "sweep",
            Command::Semilinear(_) => "semilinear",
            Command::Manifest { .. } => "manifest",
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidRegion(_) => "invalid_region",
        Error::ConstructionInfeasible { .. } => "construction_infeasible",
        Error::InvalidParameter(_) => "invalid_parameter",
        Error::WeightOverflow { .. } => "weight_overflow",
        Error::ShapeMismatch { .. } => "shape_mismatch",
        Error::Instability { .. } => "instability",
        Error::CgStagnation { .. } => "cg_stagnation",
        Error::SweepDivergence { .. } => "sweep_divergence",
        Error::DegenerateSolution { .. } => "degenerate_solution",
        Error::CoupledSolveDivergence { .. } => "coupled_solve_divergence",
        Error::UnresolvedIterate => "unresolved_iterate",
        Error::NoConvergence { .. } => "no_convergence",
        Error::Io(_) => "io",
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    subcommand: &'a str,
    exit_code: i32,
    kind: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<&'a crate::semilinear::FixedPointTrace>,
}

fn write_error(dir: &Path, subcommand: &str, e: &Error) {
    let report = ErrorReport {
        subcommand,
        exit_code: EXIT_SOLVER,
        kind: error_kind(e),
        message: e.to_string(),
        trace: match e {
            Error::NoConvergence { trace, .. } => Some(trace),
            _ => None,
        },
    };
    let _ = fs::create_dir_all(dir);
    if let Ok(bytes) = serde_json::to_vec_pretty(&report) {
        let _ = fs::write(dir.join("error.json"), bytes);
    }
}

/// Runs one subcommand and returns the process exit code.
pub fn execute(command: &Command) -> i32 {
    let args = match command {
        Command::Manifest { run_dir } => {
            return match read_manifest(run_dir) {
                Ok(check) => {
                    let text = serde_json::to_string_pretty(&check).expect("manifest serializes");
                    // a closed pipe downstream is not a verification failure
                    let _ = writeln!(std::io::stdout(), "{text}");
                    if check.config_matches && check.mismatched.is_empty() {
                        0
                    } else {
                        EXIT_VALIDATION
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_VALIDATION
                }
            };
        }
        Command::WeightsAudit(a)
        | Command::Solve(a)
        | Command::CarlemanAudit(a)
        | Command::Hum(a)
        | Command::Sweep(a)
        | Command::Semilinear(a) => a,
    };
    let text = match fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return EXIT_PARSE;
        }
    };
    let cfg = match ExperimentConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: config parse failed: {e}");
            return EXIT_PARSE;
        }
    };
    if let Err(e) = cfg.validate() {
        eprintln!("error: invalid config: {e}");
        return EXIT_VALIDATION;
    }
    let setup = match cfg.setup() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: invalid config: {e}");
            return EXIT_VALIDATION;
        }
    };
    let dir = args.output.clone().unwrap_or_else(|| cfg.output.clone());
    let start = Instant::now();
    let result = match command {
        Command::WeightsAudit(_) => run::weights_audit(&cfg, &setup),
        Command::Solve(_) => run::solve(&cfg, &setup),
        Command::CarlemanAudit(_) => run::carleman_audit(&cfg, &setup, args.parallel),
        Command::Hum(_) => run::hum(&cfg, &setup),
        Command::Sweep(_) => run::sweep(&cfg, &setup, args.parallel),
        Command::Semilinear(_) => run::semilinear(&cfg, &setup),
        Command::Manifest { .. } => unreachable!("handled above"),
    };
    let mut artifacts = match result {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            write_error(&dir, command.name(), &e);
            return EXIT_SOLVER;
        }
    };
    let wall = start.elapsed().as_secs_f64();
    artifacts.sort_by(|a, b| a.0.cmp(&b.0));
    match write_run(
        &dir,
        command.name(),
        &cfg,
        &text,
        args.parallel,
        wall,
        &artifacts,
    ) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            write_error(&dir, command.name(), &e);
            EXIT_SOLVER
        }
    }
}

fn write_run(
    dir: &Path,
    subcommand: &str,
    cfg: &ExperimentConfig,
    text: &str,
    parallel: bool,
    wall: f64,
    artifacts: &[(String, Vec<u8>)],
) -> crate::Result<()> {
    fs::create_dir_all(dir)?;
    let stale = dir.join("error.json");
    if stale.exists() {
        fs::remove_file(stale)?;
    }
    fs::write(dir.join(CONFIG_COPY), text)?;
    for (name, bytes) in artifacts {
        fs::write(dir.join(name), bytes)?;
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: subcommand.to_string(),
        config_sha256: sha256_hex(text.as_bytes()),
        seed: cfg.seed,
        parallel,
        wall_time_seconds: wall,
        artifacts: artifacts
            .iter()
            .map(|(n, b)| Manifest::entry(n, b))
            .collect(),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    fs::write(dir.join(MANIFEST_FILE), bytes)?;
    Ok(())
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli.command),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { 0 };
            let _ = e.print();
            code
        }
    }
}
