use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use scuc_core::pipeline::{run_stage, RunConfig, Stage, StageOptions};
use scuc_core::reduction::Variant;
use scuc_core::scuc::Formulation;

/// Reduced SCUC pipeline: sample generation, GNN training, model reduction
/// and verification.
#[derive(Parser)]
#[command(name = "scuc", version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags that override fields of the config file.
#[derive(Args)]
struct Overrides {
    /// JSON run configuration; defaults apply to missing fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Case file
    #[arg(long, global = true)]
    case: Option<PathBuf>,
    /// Output directory for all artifacts
    #[arg(long, global = true)]
    outdir: Option<PathBuf>,
    /// Worker cap for sample generation and verification
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Base seed; model and shuffling seeds are derived from it
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Relative MIP gap
    #[arg(long, global = true)]
    mipgap: Option<f64>,
    /// Solver time limit per solve, seconds
    #[arg(long = "time-limit", global = true)]
    time_limit: Option<f64>,
    /// Flow formulation: btheta or ptdf
    #[arg(long, global = true, value_parser = parse_formulation)]
    formulation: Option<Formulation>,
    /// Number of feasible samples to generate
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Training epochs for both models
    #[arg(long, global = true)]
    epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw perturbed demand profiles and solve them
    GenSamples,
    /// Turn samples into NC and EC graph sets and split them
    BuildGraphs,
    /// Train the commitment (node) classifier
    TrainNc,
    /// Train the critical-line (edge) classifier
    TrainEc,
    /// Predict probabilities for the test split
    Predict,
    /// Turn predictions into reduction plans
    Reduce {
        /// Build plans from the solved labels instead of predictions
        #[arg(long)]
        oracle: bool,
    },
    /// Solve base and reduced models on the test split
    Verify {
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
        /// Accept upstream artifacts produced by a different config
        #[arg(long = "allow-mixed")]
        allow_mixed: bool,
    },
    /// Aggregate verification results into tables and histograms
    Report,
    /// Run every stage in order
    All {
        #[arg(long)]
        oracle: bool,
    },
    /// Print the effective configuration as JSON
    ShowConfig,
}

fn parse_formulation(s: &str) -> Result<Formulation, String> {
    s.parse()
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

fn effective_config(o: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = o.seed {
        cfg.set_seed(seed);
    }
    if let Some(v) = &o.case {
        cfg.case = v.clone();
    }
    if let Some(v) = &o.outdir {
        cfg.outdir = v.clone();
    }
    if let Some(v) = o.jobs {
        cfg.jobs = v;
    }
    if let Some(v) = o.mipgap {
        cfg.mip_gap = v;
    }
    if let Some(v) = o.time_limit {
        cfg.time_limit = v;
    }
    if let Some(v) = o.formulation {
        cfg.formulation = v;
    }
    if let Some(v) = o.samples {
        cfg.samples = v;
    }
    if let Some(v) = o.epochs {
        cfg.train.epochs = v;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = effective_config(&cli.overrides)?;
    let mut opts = StageOptions::default();
    let stages: Vec<Stage> = match cli.command {
        Command::GenSamples => vec![Stage::GenSamples],
        Command::BuildGraphs => vec![Stage::BuildGraphs],
        Command::TrainNc => vec![Stage::TrainNc],
        Command::TrainEc => vec![Stage::TrainEc],
        Command::Predict => vec![Stage::Predict],
        Command::Reduce { oracle } => {
            opts.oracle = oracle;
            vec![Stage::Reduce]
        }
        Command::Verify { variant, allow_mixed } => {
            opts.variant = variant;
            opts.allow_mixed = allow_mixed;
            vec![Stage::Verify]
        }
        Command::Report => vec![Stage::Report],
        Command::All { oracle } => {
            opts.oracle = oracle;
            Stage::ALL.to_vec()
        }
        Command::ShowConfig => {
            cfg.validate()?;
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            return Ok(());
        }
    };
    for stage in stages {
        let start = Instant::now();
        run_stage(stage, &cfg, &opts).with_context(|| format!("stage {} failed", stage.name()))?;
        eprintln!("{:<13} done in {:.1} s", stage.name(), start.elapsed().as_secs_f64());
    }
    if let Ok(text) = std::fs::read_to_string(cfg.outdir.join("reports").join("summary.txt")) {
        if matches!(cli.command, Command::Report | Command::All { .. }) {
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
