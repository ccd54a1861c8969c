use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use usemoc::bench::{self, ExperimentConfig, RunSummary};

#[derive(Parser)]
#[command(name = "usemoc", version, about = "Constrained multi-objective Bayesian optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a run, or continue it if OUT already holds the same configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the configuration file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Continue an interrupted run.
    Resume {
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the summary of a run.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare runs on the same problem: gains in evaluations and merged curves.
    Compare {
        #[arg(required = true, num_args = 1..)]
        dirs: Vec<PathBuf>,
        /// Write gains.csv and curves.csv into this directory.
        #[arg(long)]
        save: Option<PathBuf>,
    },
}

fn print_summary(summary: &RunSummary) {
    println!(
        "{} on {} (seed {}): {} evaluations, {} feasible, {} Pareto designs",
        summary.algorithm,
        summary.problem,
        summary.seed,
        summary.evaluations,
        summary.feasible_count,
        summary.pareto_set.len()
    );
    match summary.final_phv {
        Some(v) => println!("final PHV {v}"),
        None => println!("final PHV not tracked"),
    }
    println!("wall time {:.2} s", summary.wall_time_secs);
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = Some(seed);
            }
            if cfg.seed.is_none() {
                bail!("no seed given: pass --seed or set `seed` in {}", config.display());
            }
            let summary = bench::run_experiment(&cfg, &out)
                .with_context(|| format!("run in {}", out.display()))?;
            print_summary(&summary);
        }
        Command::Resume { out } => {
            let summary = bench::resume_experiment(&out)
                .with_context(|| format!("resume in {}", out.display()))?;
            print_summary(&summary);
        }
        Command::Report { out } => {
            print_summary(&bench::summarize(&out)?);
        }
        Command::Compare { dirs, save } => {
            let report = bench::compare_dirs(&dirs)?;
            print!("{}", report.render());
            if let Some(dir) = save {
                report.save(&dir)?;
            }
        }
    }
    Ok(())
}
