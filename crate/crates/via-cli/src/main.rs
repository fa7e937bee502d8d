//! `via` — config-driven experiments over version-age metrics.
//!
//! Subcommands:
//! - `validate`: three-way agreement of closed forms, chain oracle, and
//!   Monte Carlo; exit 1 when any comparison fails.
//! - `sweep`: per-cell analytic + simulated metric table (CSV/JSON).
//! - `optimize`: constrained lag minimization map over the grid.
//!
//! Exit codes: 0 success, 1 validation failure, 2 config error.

mod config;
mod optimize;
mod output;
mod sweep;
mod validate_cmd;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use output::{sidecar, write_json, write_text};

#[derive(Debug)]
pub enum CliError {
    /// Bad config file, bad CLI usage, or unusable environment: exit 2.
    Config(String),
    /// A computation failed on inputs the config allowed: exit 2 with the
    /// source error shown.
    Runtime(String),
}

impl CliError {
    fn runtime<E: fmt::Display>(e: E) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Runtime(msg) => write!(f, "error: {msg}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "via",
    version,
    about = "Analyze, simulate, and cross-validate version-age metrics for a two-state Markov source"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (strict TOML; unknown keys are errors).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's [output].directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base RNG seed; overrides the config's simulation.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores. Results are identical for any
    /// job count.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Test fixture: corrupt one closed form so the run must fail.
    #[arg(long, hide = true)]
    corrupt_one_cell: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validate closed forms against the chain oracle and Monte Carlo.
    Validate(ValidateArgs),
    /// Tabulate analytic and simulated metrics over the parameter grid.
    Sweep(RunArgs),
    /// Solve the constrained average-lag minimization over the grid.
    Optimize(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Optimize(args) => cmd_optimize(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(2)
        }
    }
}

struct Prepared {
    config: ExperimentConfig,
    out_dir: PathBuf,
    seed: u64,
}

fn prepare(args: &RunArgs) -> Result<Prepared, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        CliError::Config(format!("cannot read {}: {e}", args.config.display()))
    })?;
    let config = ExperimentConfig::from_toml(&text).map_err(CliError::Config)?;
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size worker pool: {e}")))?;
    }
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| config.output.directory.clone());
    let seed = args.seed.unwrap_or(config.simulation.seed);
    Ok(Prepared {
        config,
        out_dir,
        seed,
    })
}

fn cmd_validate(args: &ValidateArgs) -> Result<ExitCode, CliError> {
    let prepared = prepare(&args.run)?;
    let run = validate_cmd::run(&prepared.config, prepared.seed, args.corrupt_one_cell)?;

    for warning in &run.report.skipped {
        eprintln!("warning: {warning}");
    }
    write_text(&prepared.out_dir, "validate.txt", &validate_cmd::text_report(&run))
        .map_err(|e| CliError::Config(format!("cannot write report: {e}")))?;
    if prepared.config.output.format.wants_json() {
        let sidecar = sidecar(
            "validate",
            &prepared.config,
            prepared.seed,
            validate_cmd::sidecar_extra(&run),
        );
        write_json(&prepared.out_dir, "validate.json", &sidecar)
            .map_err(|e| CliError::Config(format!("cannot write sidecar: {e}")))?;
    }

    println!("{}", run.report.summary());
    if run.report.all_passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        for failure in run.report.failures().take(20) {
            eprintln!("{failure}");
        }
        Ok(ExitCode::from(1))
    }
}

fn cmd_sweep(args: &RunArgs) -> Result<ExitCode, CliError> {
    let prepared = prepare(args)?;
    let (table, warnings) = sweep::run(&prepared.config, prepared.seed)?;
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }
    emit_table(&prepared, "sweep", &table, sweep::sidecar_extra(&table, &warnings))?;
    println!(
        "sweep: {} rows x {} columns written to {}",
        table.rows.len(),
        table.columns.len(),
        prepared.out_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_optimize(args: &RunArgs) -> Result<ExitCode, CliError> {
    let prepared = prepare(args)?;
    let (table, warnings) = optimize::run(&prepared.config)?;
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }
    emit_table(
        &prepared,
        "optimize",
        &table,
        optimize::sidecar_extra(&table, &warnings),
    )?;
    println!(
        "optimize: {} rows written to {}",
        table.rows.len(),
        prepared.out_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn emit_table(
    prepared: &Prepared,
    name: &str,
    table: &output::Table,
    extra: Vec<(&'static str, serde_json::Value)>,
) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Config(format!("cannot write output: {e}"));
    if prepared.config.output.format.wants_csv() {
        write_text(&prepared.out_dir, &format!("{name}.csv"), &table.to_csv()).map_err(io_err)?;
    }
    if prepared.config.output.format.wants_json() {
        let sidecar = sidecar(name, &prepared.config, prepared.seed, extra);
        write_json(&prepared.out_dir, &format!("{name}.json"), &sidecar).map_err(io_err)?;
    }
    Ok(())
}
