//! Command-line front end: `lazylab <experiment> [--config FILE] ...`,
//! `lazylab plot DIR` and `lazylab preset <experiment>`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lazylab::experiment::{emit_plot_data, run_experiment, ExperimentConfig, ExperimentKind, RunOptions};
use lazylab::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_BUDGET: u8 = 4;

#[derive(Parser)]
#[command(name = "lazylab", version, about = "Train two-layer ReLU networks and random-feature models and audit the kernel-regime bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Random-label fits over a ladder of initialization scales.
    FitRandomLabels(RunArgs),
    /// Network versus random-feature model on a single-neuron target.
    OneNeuron(RunArgs),
    /// Test error against width, with and without path-norm regularization.
    WidthSweep(RunArgs),
    /// Terminal network/random-feature gap against width.
    CouplingSweep(RunArgs),
    /// Every theory check on a small preset, with pass/fail reports.
    BoundAudit(RunArgs),
    /// Write tidy `series,x,y` CSVs for an artifact directory.
    Plot {
        dir: PathBuf,
    },
    /// Print the preset configuration of an experiment as JSON.
    Preset {
        experiment: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration; the built-in preset is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "LAZYLAB_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "LAZYLAB_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Record reproducible mode in the summary. Output bytes depend only on
    /// the configuration and seeds in either mode.
    #[arg(long)]
    reproducible: bool,
}

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("config error: {msg}");
    ExitCode::from(EXIT_CONFIG)
}

fn run(kind: ExperimentKind, args: RunArgs) -> ExitCode {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => return config_error(format!("{}: {e}", path.display())),
            };
            match ExperimentConfig::from_json(&text) {
                Ok(c) => c,
                Err(e) => return config_error(e),
            }
        }
        None => ExperimentConfig::preset(kind),
    };
    if cfg.experiment != kind {
        return config_error(format!("config is for `{}`, not `{}`", cfg.experiment.name(), kind.name()));
    }
    if let Some(s) = args.seed {
        cfg.seeds = vec![s];
    }
    let out_dir = args
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("lazylab-out").join(kind.name()));
    let opts = RunOptions { out_dir: out_dir.clone(), workers: args.workers, reproducible: args.reproducible };
    let summary = match run_experiment(&cfg, &opts) {
        Ok(s) => s,
        Err(e @ (Error::Config(_) | Error::InvalidArgument(_))) => return config_error(e),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    for r in &summary.runs {
        println!(
            "{} m={} beta={} seed={} status={:?} steps={} final_train_risk={}",
            r.model,
            r.m,
            r.beta_label,
            r.seed,
            r.status,
            r.steps,
            r.final_train_risk.map_or("nan".to_string(), |v| format!("{v:.3e}"))
        );
    }
    for c in &summary.checks {
        println!("check {} {}", c.claim_id, if c.pass { "PASS" } else { "FAIL" });
    }
    println!("artifacts: {}", out_dir.display());
    if summary.any_diverged() {
        eprintln!("at least one run diverged; partial logs were written");
        ExitCode::from(EXIT_DIVERGED)
    } else if summary.any_budget_exhausted() {
        eprintln!("at least one run exhausted its step budget; partial artifacts were written");
        ExitCode::from(EXIT_BUDGET)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::FitRandomLabels(a) => run(ExperimentKind::FitRandomLabels, a),
        Command::OneNeuron(a) => run(ExperimentKind::OneNeuron, a),
        Command::WidthSweep(a) => run(ExperimentKind::WidthSweep, a),
        Command::CouplingSweep(a) => run(ExperimentKind::CouplingSweep, a),
        Command::BoundAudit(a) => run(ExperimentKind::BoundAudit, a),
        Command::Plot { dir } => match emit_plot_data(&dir) {
            Ok(rep) => {
                for f in &rep.files {
                    println!("{}", f.display());
                }
                for m in &rep.missing {
                    eprintln!("missing run: {m}");
                }
                println!("{} series", rep.series);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
        Command::Preset { experiment } => match ExperimentKind::parse(&experiment) {
            Ok(k) => {
                println!("{}", serde_json::to_string_pretty(&ExperimentConfig::preset(k)).expect("preset serializes"));
                ExitCode::SUCCESS
            }
            Err(e) => config_error(e),
        },
    }
}
