use std::path::PathBuf;
use std::process::ExitCode;

use calproj::cli::{cmd_analyze, cmd_run, cmd_simulate, Overrides};
use clap::{Parser, Subcommand};

/// Calibrated projection confidence intervals.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Worker threads (0 lets the runtime decide).
    #[arg(long, global = true, env = "CALPROJ_WORKERS")]
    workers: Option<usize>,
    /// Overrides `options.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Interval for one dataset.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Result file; evaluated points go to `<out>.points.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded Monte Carlo batch.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Model to simulate from (overrides `model.name`).
        #[arg(long)]
        dgp: Option<String>,
        #[arg(long)]
        nmc: u64,
        #[arg(long, default_value_t = 1)]
        sim_lo: u64,
        /// Defaults to `nmc`.
        #[arg(long)]
        sim_hi: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summary statistics over a directory of result files.
    Analyze { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        seed: cli.seed,
        workers: cli.workers,
    };
    let code = match cli.command {
        Command::Run { config, data, out } => cmd_run(&config, &data, &out, overrides),
        Command::Simulate {
            config,
            dgp,
            nmc,
            sim_lo,
            sim_hi,
            out,
        } => cmd_simulate(
            &config,
            dgp.as_deref(),
            nmc,
            sim_lo,
            sim_hi.unwrap_or(nmc),
            &out,
            overrides,
        ),
        Command::Analyze { dir } => cmd_analyze(&dir),
    };
    ExitCode::from(code as u8)
}
