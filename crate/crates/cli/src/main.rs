use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use thiserror::Error;

mod config;
mod experiments;
mod output;

use config::{
    BoundsExperiment, FockExperiment, OneParticleExperiment, SigmaExperiment, SpecialExperiment, ThermoExperiment,
    Validate,
};
use experiments::Experiment;
use output::ResultRecord;

/// Environment variable that sets the worker count when `--jobs` is absent.
const JOBS_ENV: &str = "LR_FERMI_JOBS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lr-fermi", version, about = "Propagation-bound verification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convolution closed forms and Bessel-function inequalities.
    VerifySpecial(RunArgs),
    /// Truncated Dyson series against the split-step oracle.
    OneParticle(RunArgs),
    /// One-particle propagation bounds against the oracle.
    BoundsCheck(RunArgs),
    /// Many-body decay function on a lattice.
    FockRun(RunArgs),
    /// Cauchy gaps of nested regions.
    ThermoLimit(RunArgs),
    /// Smeared-to-point interaction convergence.
    SigmaScan(RunArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// JSON experiment description.
    #[arg(long)]
    config: PathBuf,
    /// Directory for the CSV and JSON outputs.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Seed for Monte Carlo quadrature; overrides the top-level config seed
    /// (a per-experiment seed still wins).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: LR_FERMI_JOBS, then the number of CPUs).
    #[arg(long)]
    jobs: Option<usize>,
}

fn job_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let jobs = match flag {
        Some(n) => Some(n),
        None => match std::env::var(JOBS_ENV) {
            Ok(s) => Some(
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Config(format!("{JOBS_ENV}={s:?} is not a job count")))?,
            ),
            Err(_) => None,
        },
    };
    if jobs == Some(0) {
        return Err(CliError::Config("job count must be at least 1".into()));
    }
    Ok(jobs)
}

fn design_constants() -> Value {
    use lr_fermi::bounds;
    json!({
        "d3": { "1": lr_fermi::special::d3_constant(1), "2": lr_fermi::special::d3_constant(2), "3": lr_fermi::special::d3_constant(3) },
        "default_calibration_horizon": bounds::DEFAULT_CALIBRATION_HORIZON,
        "kernel_grid": {
            "points": bounds::KERNEL_GRID_POINTS,
            "max_spacing": bounds::KERNEL_GRID_SPACING,
            "max_time_step": bounds::KERNEL_MAX_STEP,
        },
        "dense_norm_limit": lr_fermi::fock::DENSE_NORM_LIMIT,
        "power_iteration_tolerance": lr_fermi::fock::POWER_ITERATION_TOLERANCE,
        "packet_cutoff_widths": lr_fermi::fock::PACKET_CUTOFF,
        "max_sites": lr_fermi::fock::MAX_SITES,
    })
}

struct Report {
    records: Vec<ResultRecord>,
    summary: Value,
}

fn run<E: Experiment + Validate + DeserializeOwned + Sync>(args: &RunArgs) -> Result<Report, CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let cfg = config::parse::<E>(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let seed = args.seed.or(cfg.seed);
    let jobs = job_count(args.jobs)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;

    let mut records = Vec::new();
    let mut per_experiment = Vec::new();
    for (i, exp) in cfg.experiments.iter().enumerate() {
        let name = exp.name().map(str::to_string).unwrap_or_else(|| format!("{}-{i}", E::KIND));
        let started = Instant::now();
        let outcome = pool.install(|| exp.run(&name, seed))?;
        let failed = outcome.records.iter().filter(|r| !r.pass()).count();
        per_experiment.push(json!({
            "name": name,
            "records": outcome.records.len(),
            "failed": failed,
            "wall_time_seconds": started.elapsed().as_secs_f64(),
            "metadata": outcome.metadata,
        }));
        records.extend(outcome.records);
    }
    let failed = records.iter().filter(|r| !r.pass()).count();
    let mut counts = BTreeMap::new();
    counts.insert("experiments", cfg.experiments.len());
    counts.insert("records", records.len());
    counts.insert("passed", records.len() - failed);
    counts.insert("failed", failed);
    let summary = json!({
        "subcommand": E::KIND,
        "config": args.config.display().to_string(),
        "seed": seed,
        "counts": counts,
        "worst_margins": output::worst_margins(&records),
        "metadata": { "design": design_constants(), "experiments": per_experiment },
    });
    Ok(Report { records, summary })
}

fn write_outputs(out: &Path, kind: &str, report: &Report) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    output::write_csv(&out.join(format!("{kind}.csv")), &report.records)?;
    output::write_json(&out.join(format!("{kind}.json")), report.summary.clone())
}

fn execute<E: Experiment + Validate + DeserializeOwned + Sync>(args: &RunArgs) -> Result<bool, CliError> {
    let report = run::<E>(args)?;
    write_outputs(&args.out, E::KIND, &report)?;
    let failed: Vec<&ResultRecord> = report.records.iter().filter(|r| !r.pass()).collect();
    println!(
        "{}: {} records, {} failed -> {}",
        E::KIND,
        report.records.len(),
        failed.len(),
        args.out.join(format!("{}.csv", E::KIND)).display()
    );
    for r in failed.iter().take(10) {
        eprintln!(
            "FAIL {} {} [{}]: measured {} > bound {} + budget {}",
            r.experiment,
            r.check,
            r.params_string(),
            output::fmt_f64(r.measured),
            output::fmt_f64(r.bound),
            output::fmt_f64(r.budget)
        );
    }
    Ok(failed.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::VerifySpecial(a) => execute::<SpecialExperiment>(a),
        Command::OneParticle(a) => execute::<OneParticleExperiment>(a),
        Command::BoundsCheck(a) => execute::<BoundsExperiment>(a),
        Command::FockRun(a) => execute::<FockExperiment>(a),
        Command::ThermoLimit(a) => execute::<ThermoExperiment>(a),
        Command::SigmaScan(a) => execute::<SigmaExperiment>(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
