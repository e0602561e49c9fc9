use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use interlacement_cli::config::{Experiment, ExperimentConfig};
use interlacement_cli::experiments;

#[derive(Parser)]
#[command(version, about = "Torus walk and random interlacement experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Estimate η_N(u) on a level grid.
    PhaseSweep,
    /// Couple the torus walk and random interlacements inside the box.
    CouplingPipeline,
    /// Compare coupling failures and tails with their bounds.
    BoundCheck,
    /// Capacities, Green function values and the box geometry.
    TabulatePotential,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::parse(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    cfg.experiment = match cli.command {
        Command::PhaseSweep => Experiment::PhaseSweep,
        Command::CouplingPipeline => Experiment::CouplingPipeline,
        Command::BoundCheck => Experiment::BoundCheck,
        Command::TabulatePotential => Experiment::TabulatePotential,
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.replicas {
        cfg.replicas = r;
    }
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn set_threads(n: usize) -> Result<()> {
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    #[cfg(not(feature = "parallel"))]
    if n > 1 {
        eprintln!("built without the `parallel` feature; running on one thread");
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(t) = cli.threads {
        set_threads(t)?;
    }
    let cfg = load(cli)?;
    let report = experiments::run(&cfg)?;
    let (csv, json) = report.write(&cfg.output)?;
    for a in &report.assertions {
        println!("{} {}: {}", if a.pass { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
