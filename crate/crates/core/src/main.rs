use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relay_effcap::experiment::{run, ExperimentSpec};
use relay_effcap::tradeoff::TimeUnit;

#[derive(Parser)]
#[command(
    name = "effcap",
    version,
    about = "Effective capacity of buffer-aided two-hop links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_unit)]
        time_unit: Option<TimeUnit>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        dmax: Option<f64>,
        #[arg(long)]
        snr1_db: Option<f64>,
        #[arg(long)]
        snr2_db: Option<f64>,
        #[arg(long)]
        d: Option<f64>,
    },
}

fn parse_unit(s: &str) -> Result<TimeUnit, String> {
    s.parse().map_err(|e: relay_effcap::Error| e.to_string())
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        time_unit,
        out,
        threads,
        seed,
        epsilon,
        dmax,
        snr1_db,
        snr2_db,
        d,
    } = Cli::parse().command;

    let mut spec = match ExperimentSpec::from_file(&config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(v) = time_unit {
        spec.time_unit = v;
    }
    if let Some(v) = out {
        spec.out = v;
    }
    if threads.is_some() {
        spec.threads = threads;
    }
    if let Some(v) = seed {
        spec.seed = v;
    }
    if let Some(v) = epsilon {
        spec.epsilon = v;
    }
    if let Some(v) = dmax {
        spec.dmax = v;
    }
    if let Some(v) = snr1_db {
        spec.snr1_db = v;
    }
    if let Some(v) = snr2_db {
        spec.snr2_db = v;
    }
    if let Some(v) = d {
        spec.d = v;
    }

    match run(&spec) {
        Ok(summary) => {
            println!("wrote {} rows to {}", summary.rows, summary.csv.display());
            println!("metadata in {}", summary.sidecar.display());
            if summary.failures.is_empty() {
                return ExitCode::SUCCESS;
            }
            for f in &summary.failures {
                eprintln!("row {} {}: {}: {}", f.row, f.point, f.solver, f.error);
            }
            eprintln!(
                "{} grid point failure(s); partial results kept",
                summary.failures.len()
            );
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
