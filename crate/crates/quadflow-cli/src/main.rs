//! `quadflow`: deterministic experiment harness for the quadflow toolkit.
//!
//! Every subcommand reads one JSON configuration, runs its experiment, and
//! writes the artifacts plus a run manifest into the output directory.
//! Exit status 0 means the artifacts were written; 1 means the configuration
//! failed validation (one machine-parsable line on stderr, nothing written);
//! 2 means the computation itself failed numerically (the diagnostic payload
//! and manifest are still written).

mod config;
mod experiment;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::experiment::{lookup, RunError};
use crate::report::Artifact;

#[derive(Parser)]
#[command(
    name = "quadflow",
    version,
    about = "Deterministic experiment harness for the quadflow toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (falls back to the config `output` field).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Symbolic derivation bundle: flow equation, unitarity defect, completion of squares
    Derive(RunArgs),
    /// Stationary algebraic weight equation with the feasibility certificate
    SolveAre(RunArgs),
    /// Backward weight and affine trajectories with solver diagnostics
    Riccati(RunArgs),
    /// Flow expectations with optional collision-model cross-check
    Simulate(RunArgs),
    /// Synthesize the optimal gain and measure cost excess under displacements
    ProbeOptimality(RunArgs),
    /// Evaluate one control cost along three independently assembled routes
    CostEquivalence(RunArgs),
    /// Noise-free regulator feedback versus the discretized program oracle
    ClassicalLqr(RunArgs),
}

impl Command {
    fn split(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::Derive(args) => ("derive", args),
            Command::SolveAre(args) => ("solve-are", args),
            Command::Riccati(args) => ("riccati", args),
            Command::Simulate(args) => ("simulate", args),
            Command::ProbeOptimality(args) => ("probe-optimality", args),
            Command::CostEquivalence(args) => ("cost-equivalence", args),
            Command::ClassicalLqr(args) => ("classical-lqr", args),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    match drive(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Validation(message)) => {
            eprintln!("error: validation: {}", single_line(&message));
            ExitCode::from(1)
        }
        Err(RunError::Numerical(error)) => {
            eprintln!("error: numerical: {}", single_line(&error.to_string()));
            ExitCode::from(2)
        }
    }
}

fn single_line(message: &str) -> String {
    message.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn drive(kind: &'static str, args: &RunArgs) -> Result<(), RunError> {
    let started = Instant::now();
    let raw = fs::read_to_string(&args.config).map_err(|e| {
        RunError::Validation(format!("cannot read config {}: {e}", args.config.display()))
    })?;
    let echo: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| RunError::Validation(format!("config is not valid JSON: {e}")))?;
    let config: ExperimentConfig = serde_json::from_value(echo.clone())
        .map_err(|e| RunError::Validation(format!("config does not fit the schema: {e}")))?;
    if config.kind != kind {
        return Err(RunError::Validation(format!(
            "config kind `{}` does not match the `{kind}` subcommand",
            config.kind
        )));
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.output.clone())
        .ok_or_else(|| {
            RunError::Validation(
                "an output directory is required (--out or the config `output` field)".into(),
            )
        })?;
    let strategy = lookup(kind).expect("every subcommand is registered");
    match strategy.run(&config) {
        Ok(artifacts) => write_run(&out, strategy, &echo, artifacts, started),
        Err(RunError::Numerical(error)) => {
            // Numerical failures still leave a diagnostic payload behind.
            let payload = Artifact::text(
                "failure.txt",
                format!("numerical failure\nkind = {kind}\nerror = {error}\n"),
            );
            let _ = write_run(&out, strategy, &echo, vec![payload], started);
            Err(RunError::Numerical(error))
        }
        Err(validation) => Err(validation),
    }
}

fn write_run(
    out: &Path,
    strategy: &dyn experiment::Experiment,
    echo: &serde_json::Value,
    artifacts: Vec<Artifact>,
    started: Instant,
) -> Result<(), RunError> {
    let io_error =
        |path: &Path, e: std::io::Error| RunError::Validation(format!("cannot write {}: {e}", path.display()));
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let mut names = Vec::with_capacity(artifacts.len());
    for artifact in &artifacts {
        let path = out.join(&artifact.name);
        fs::write(&path, &artifact.bytes).map_err(|e| io_error(&path, e))?;
        names.push(artifact.name.clone());
    }
    let manifest = report::manifest(
        strategy.kind(),
        strategy.describe(),
        echo,
        &names,
        started.elapsed().as_secs_f64(),
    );
    let path = out.join(&manifest.name);
    fs::write(&path, &manifest.bytes).map_err(|e| io_error(&path, e))?;
    Ok(())
}
