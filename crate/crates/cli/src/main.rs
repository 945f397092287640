//! `neumann-walk`: solve Laplace-Neumann problems by boundary-layer random
//! walks.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 compatibility
//! violation, 3 internal geometry inconsistency.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{parse_points, NormalizationChoice, OutputPaths, RunConfig};

#[derive(Parser)]
#[command(name = "neumann-walk", version, about = "Monte Carlo Laplace-Neumann solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the solution at evaluation points.
    Solve(RunArgs),
    /// Error-versus-h study against an exact solution.
    Converge(ConvergeArgs),
    /// Problem verification, martingale drift, stationarity and calibration.
    Diagnose(RunArgs),
    /// List the built-in problems.
    ListProblems,
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML run configuration (`.json` is read as JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in problem name, or `custom` with a `[custom]` table in the config.
    #[arg(long)]
    problem: Option<String>,
    /// Evaluation points `x1,x2,...`; separate several with `;` or repeat the flag.
    #[arg(long = "points", alias = "point", allow_hyphen_values = true)]
    points: Vec<String>,
    /// Step size h; the layer is λ√h wide.
    #[arg(long)]
    h: Option<f64>,
    /// Strictly decreasing step sizes for `converge`, comma separated.
    #[arg(long, value_delimiter = ',')]
    h_list: Option<Vec<f64>>,
    /// Layer constant; defaults to sqrt(d)/2 + 1e-9.
    #[arg(long)]
    lambda: Option<f64>,
    /// Reflecting-walk horizon.
    #[arg(long = "T", alias = "horizon")]
    horizon: Option<f64>,
    /// Trajectories per evaluation point.
    #[arg(long = "M", alias = "trajectories")]
    trajectories: Option<usize>,
    /// Master seed; defaults to $NEUMANN_WALK_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Censor trajectories after this many steps.
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long, value_enum)]
    normalization: Option<NormalizationChoice>,
    /// Constant added to the boundary datum.
    #[arg(long, allow_hyphen_values = true)]
    datum_offset: Option<f64>,
    /// Step counts for the martingale diagnostic, comma separated.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<u64>>,
    /// Deterministic drift allowance per step in the martingale diagnostic.
    #[arg(long)]
    c_drift: Option<f64>,
    /// CSV results file; stdout when omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON report file; `diagnose` prints it to stdout when omitted.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Log-log data file written by `converge`.
    #[arg(long)]
    dat: Option<PathBuf>,
    /// Run even if the datum fails the compatibility check.
    #[arg(long)]
    override_compatibility: bool,
    /// Deflect to y^π + λ√h·η instead of y + λ√h·η.
    #[arg(long)]
    deflect_from_projection: bool,
    /// Write a JSON-lines step trace of trajectory 0 at each point.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Do not repeat an inconclusive convergence study with 4x M.
    #[arg(long)]
    no_rerun: bool,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Fit these errors instead of running walks.
    #[arg(long, value_delimiter = ',', hide = true)]
    synthetic_errors: Option<Vec<f64>>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let output = if self.csv.is_some() || self.json.is_some() || self.dat.is_some() {
            Some(OutputPaths {
                csv: self.csv,
                json: self.json,
                dat: self.dat,
            })
        } else {
            None
        };
        let flags = RunConfig {
            problem: self.problem,
            custom: None,
            points: if self.points.is_empty() {
                None
            } else {
                Some(parse_points(&self.points)?)
            },
            h: self.h,
            h_list: self.h_list,
            lambda: self.lambda,
            horizon: self.horizon,
            trajectories: self.trajectories,
            seed: self.seed,
            workers: self.workers,
            max_steps: self.max_steps,
            normalization: self.normalization,
            datum_offset: self.datum_offset,
            checkpoints: self.checkpoints,
            c_drift: self.c_drift,
            rerun_inconclusive: self.no_rerun.then_some(false),
            output,
            override_compatibility: self.override_compatibility.then_some(true),
            deflect_from_projection: self.deflect_from_projection.then_some(true),
            trace: self.trace,
        };
        Ok(base.overlay(flags))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(args) => commands::solve(&args.into_config()?.resolve()?),
        Command::Converge(args) => {
            let run = args.run.into_config()?.resolve()?;
            commands::converge(&run, args.synthetic_errors.as_deref())
        }
        Command::Diagnose(args) => commands::diagnose(&args.into_config()?.resolve()?),
        Command::ListProblems => commands::list_problems(),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<neumann_walk::Error>() {
            return match e {
                neumann_walk::Error::CompatibilityViolation { .. } => 2,
                neumann_walk::Error::GeometryInconsistency { .. } => 3,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(neumann_walk::Error::CompatibilityViolation { value, allowed }) =
                e.chain().find_map(|c| c.downcast_ref::<neumann_walk::Error>())
            {
                eprintln!("measured boundary integral: {value:?} (allowed {allowed:?})");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
