//! Command-line driver for the orientation benchmark suite.
//!
//! Three benchmark subcommands run a scenario under a list of
//! representations and optionally write per-representation CSV files plus
//! one aggregate JSON summary; `selftest` runs the built-in consistency
//! checks. Settings resolve in three layers: compiled defaults, then the
//! `--config` TOML file, then explicit flags.

pub mod config;
pub mod output;
pub mod selftest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rotbench_core::bench::{
    run_frame_ilqr, run_quad_ilqr, run_wahba, BenchmarkReport, FrameScenario, QuadScenario,
    WahbaScenario,
};
use rotbench_core::ilqr::models::RotationParam;
use rotbench_core::wahba::Parameterization;

use config::BenchConfig;

#[derive(Debug, Parser)]
#[command(
    name = "rotbench",
    version,
    about = "Deterministic benchmarks comparing 3D orientation representations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Point-cloud attitude alignment solved by Gauss-Newton.
    Wahba(WahbaArgs),
    /// Rotating-frame reorientation solved by iLQR.
    FrameIlqr(IlqrArgs),
    /// Quadrotor flip solved by iLQR.
    QuadIlqr(IlqrArgs),
    /// Built-in consistency checks; exits nonzero on any failure.
    Selftest,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Number of replicates.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Master seed; replicate i draws from stream i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Solver iteration cap.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Comma-separated representation tokens (default: all).
    #[arg(long, value_delimiter = ',')]
    pub repr: Option<Vec<String>>,
    /// Directory for CSV and JSON outputs (omit to skip writing files).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Record wall times in the outputs (makes output non-reproducible).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct WahbaArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Point pairs per instance.
    #[arg(long)]
    pub n_points: Option<usize>,
    /// Standard deviation of the observation noise.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct IlqrArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Integration step in seconds.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Number of control intervals.
    #[arg(long)]
    pub horizon: Option<usize>,
}

/// Entry point shared by the binary and the tests: returns the process exit
/// code (0 success, 1 benchmark or self-test failure).
pub fn run_cli(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Wahba(args) => cmd_wahba(args),
        Command::FrameIlqr(args) => cmd_frame_ilqr(args),
        Command::QuadIlqr(args) => cmd_quad_ilqr(args),
        Command::Selftest => return cmd_selftest(),
    };
    match outcome {
        Ok(()) => 0,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<BenchConfig, String> {
    match &common.config {
        Some(path) => BenchConfig::load(path),
        None => Ok(BenchConfig::default()),
    }
}

fn parse_tokens<T: Copy>(
    requested: &Option<Vec<String>>,
    all: &[T],
    from_name: impl Fn(&str) -> Option<T>,
    names: impl Fn(T) -> &'static str,
) -> Result<Vec<T>, String> {
    match requested {
        None => Ok(all.to_vec()),
        Some(tokens) => tokens
            .iter()
            .map(|t| {
                from_name(t).ok_or_else(|| {
                    let valid: Vec<&str> = all.iter().map(|&p| names(p)).collect();
                    format!("unknown representation '{t}' (valid: {})", valid.join(", "))
                })
            })
            .collect(),
    }
}

fn finish(common: &CommonArgs, reports: Vec<BenchmarkReport>) -> Result<(), String> {
    for report in &reports {
        let mut line = format!(
            "{}/{}: {}/{} converged, median final {:.6e}",
            report.scenario,
            report.representation,
            report.converged,
            report.replicates,
            rotbench_core::bench::median(&report.final_values),
        );
        if common.timings {
            line.push_str(&format!(", {:.2}s", report.total_wall_time_s));
        }
        println!("{line}");
    }
    if let Some(dir) = &common.out {
        let paths = output::write_outputs(dir, &reports).map_err(|e| e.to_string())?;
        println!("wrote {} files to {}", paths.len(), dir.display());
    }
    Ok(())
}

fn cmd_wahba(args: WahbaArgs) -> Result<(), String> {
    let cfg = load_config(&args.common)?;
    let mut scn: WahbaScenario = cfg.wahba;
    if let Some(v) = args.common.replicates {
        scn.replicates = v;
    }
    if let Some(v) = args.common.seed {
        scn.seed = v;
    }
    if let Some(v) = args.common.max_iters {
        scn.max_iters = v;
    }
    if let Some(v) = args.n_points {
        scn.n_points = v;
    }
    if let Some(v) = args.noise_sigma {
        scn.noise_sigma = v;
    }
    let reprs = parse_tokens(
        &args.common.repr,
        &Parameterization::ALL,
        Parameterization::from_name,
        Parameterization::name,
    )?;
    let mut reports = Vec::new();
    for par in reprs {
        reports.push(run_wahba(&scn, par, args.common.timings).map_err(|e| e.to_string())?);
    }
    finish(&args.common, reports)
}

fn cmd_frame_ilqr(args: IlqrArgs) -> Result<(), String> {
    let cfg = load_config(&args.common)?;
    let mut scn: FrameScenario = cfg.frame;
    if let Some(v) = args.common.replicates {
        scn.replicates = v;
    }
    if let Some(v) = args.common.seed {
        scn.seed = v;
    }
    if let Some(v) = args.common.max_iters {
        scn.max_iters = v;
    }
    if let Some(v) = args.dt {
        scn.dt = v;
    }
    if let Some(v) = args.horizon {
        scn.horizon = v;
    }
    let reprs = parse_tokens(
        &args.common.repr,
        &RotationParam::ALL,
        RotationParam::from_name,
        RotationParam::name,
    )?;
    let mut reports = Vec::new();
    for param in reprs {
        reports
            .push(run_frame_ilqr(&scn, param, args.common.timings).map_err(|e| e.to_string())?);
    }
    finish(&args.common, reports)
}

fn cmd_quad_ilqr(args: IlqrArgs) -> Result<(), String> {
    let cfg = load_config(&args.common)?;
    let mut scn: QuadScenario = cfg.quad;
    if let Some(v) = args.common.replicates {
        scn.replicates = v;
    }
    if let Some(v) = args.common.seed {
        scn.seed = v;
    }
    if let Some(v) = args.common.max_iters {
        scn.max_iters = v;
    }
    if let Some(v) = args.dt {
        scn.dt = v;
    }
    if let Some(v) = args.horizon {
        scn.horizon = v;
    }
    let reprs = parse_tokens(
        &args.common.repr,
        &RotationParam::ALL,
        RotationParam::from_name,
        RotationParam::name,
    )?;
    let mut reports = Vec::new();
    for param in reprs {
        reports
            .push(run_quad_ilqr(&scn, param, args.common.timings).map_err(|e| e.to_string())?);
    }
    finish(&args.common, reports)
}

fn cmd_selftest() -> i32 {
    let inject = std::env::var("ROTBENCH_SELFTEST_INJECT").map_or(false, |v| v == "1");
    let report = selftest::run(inject);
    print!("{}", report.render());
    if report.all_passed() {
        0
    } else {
        1
    }
}
