use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use obstacle_cli::{replay, run, sweep, validate_config, Options, RunResult};

/// Penalized obstacle-problem simulator for stochastic porous medium equations.
#[derive(Parser)]
#[command(name = "obstacle-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (overrides OBSTACLE_SIM_OUT and the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Exit nonzero on any failed diagnostic.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// One run per value of a numeric config field, plus an aggregate table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted field path, e.g. `solver.dt` or `solver.eps`.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Parse and check a config; prints its hash.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute diagnostics from stored trajectories of a finished run.
    Replay {
        /// Artifact directory of the run.
        #[arg(long)]
        run: PathBuf,
    },
}

fn report_failures(results: &[RunResult]) -> bool {
    let mut ok = true;
    for r in results {
        for e in r.report.failures() {
            ok = false;
            eprintln!(
                "FAILED {}: {} = {} (tolerance {})",
                r.out.display(),
                e.name,
                e.value,
                e.tolerance.map(|t| t.to_string()).unwrap_or_default()
            );
        }
    }
    ok
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = Options { out: cli.out, workers: cli.workers, seed: cli.seed, strict: cli.strict };
    let outcome = match &cli.command {
        Command::Run { config } => run(config, &opts).map(|r| {
            println!("{}", r.out.display());
            // a run fails on any failed diagnostic
            report_failures(&[r])
        }),
        Command::Sweep { config, axis, values } => sweep(config, axis, values, &opts).map(|rs| {
            for r in &rs {
                println!("{}", r.out.display());
            }
            report_failures(&rs) || !opts.strict
        }),
        Command::ValidateConfig { config } => validate_config(config).map(|hash| {
            println!("{hash}");
            true
        }),
        Command::Replay { run } => replay(run, &opts).map(|r| {
            println!("{}", r.out.join("replay_summary.csv").display());
            report_failures(&[r]) || !opts.strict
        }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
