use clap::{Parser, Subcommand};
use cogsim_core::metrics::analyze_file;
use cogsim_core::oracle::predict;
use cogsim_core::sweep::{sweep, Grid};
use cogsim_core::{engine, RunConfig, SimError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cogsim", version, about = "Coalition-based cognition simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration and write its JSON Lines trace.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured tick count.
        #[arg(long)]
        ticks: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the metrics report of a trace.
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-series CSV files into this directory.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Predict formation, strengths, dissipation and promotion for a small config.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every cell of a parameter grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn write_json(path: &Path, text: &str) -> cogsim_core::Result<()> {
    std::fs::write(path, format!("{text}\n"))?;
    Ok(())
}

fn run(cmd: Command) -> cogsim_core::Result<()> {
    match cmd {
        Command::Simulate { config, seed, ticks, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = ticks {
                cfg.ticks = t;
            }
            let summary = engine::run(&cfg, &out)?;
            println!("{} records, sha256 {}", summary.records, summary.digest);
        }
        Command::Analyze { trace, out, csv } => {
            let report = analyze_file(&trace)?;
            write_json(&out, &report.to_json())?;
            if let Some(dir) = csv {
                report.write_csv(&dir)?;
            }
            println!(
                "{} coalitions, max depth {}, {} distinct signatures",
                report.coalitions.len(),
                report.max_depth,
                report.novelty.len()
            );
        }
        Command::Oracle { config, out } => {
            let report = predict(&RunConfig::load(&config)?)?;
            write_json(&out, &serde_json::to_string_pretty(&report)?)?;
            println!("{} coalitions predicted", report.coalitions.len());
        }
        Command::Sweep { config, grid, out, threads } => {
            let base = RunConfig::load(&config)?;
            let grid = Grid::load(&grid)?;
            let summary = sweep(&base, &grid, &out, threads)?;
            println!("{} cells, metrics in {}", summary.traces.len(), summary.csv.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                SimError::Validation { .. } | SimError::OracleRefused(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
