use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use euler_lab::expcli::{run, ExperimentConfig, OutputDir, Scenario};

/// Axisymmetric Euler vortex-particle experiments.
#[derive(Parser, Debug)]
#[command(name = "euler-lab", version)]
struct Cli {
    /// linf-inflation, sobolev-inflation, key-lemma, norms-baseline or convergence
    scenario: Scenario,
    /// Flat TOML configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg = ExperimentConfig::load(&cli.config)?;
    let dir = cli
        .output
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cli.scenario.name()));
    let out = OutputDir::create(dir)?;
    run(cli.scenario, &cfg, &out)?;
    println!("{}: results in {}", cli.scenario, out.root().display());
    Ok(())
}
