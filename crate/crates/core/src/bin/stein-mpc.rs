use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use stein_mpc::harness::{export_ridge, run_batch, summarize, ExperimentConfig};

#[derive(Parser)]
#[command(version, about = "Stein variational MPC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of episodes and write the run directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
        /// Worker threads (defaults to the config value, then all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Write ridge-plot CSVs of the dynamics posterior for every episode.
    ExportRidge {
        #[arg(long)]
        run: PathBuf,
    },
    /// Recompute and print the summary of a run directory.
    Summarize {
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(command: Command) -> stein_mpc::Result<ExitCode> {
    match command {
        Command::Run {
            config,
            episodes,
            seed,
            out,
            threads,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.episodes = episodes.unwrap_or(cfg.episodes);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.threads = threads.or(cfg.threads);
            cfg.validate()?;
            let result = run_batch(&cfg, Some(&out))?;
            println!("{}", serde_json::to_string_pretty(&result.summary)?);
            Ok(if result.summary.all_completed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::ExportRidge { run } => {
            let report = export_ridge(&run)?;
            for f in &report.files {
                println!("{}", f.display());
            }
            if report.files.is_empty() {
                eprintln!("warning: no posterior snapshots under {}; nothing exported", run.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Summarize { run } => {
            let summary = summarize(&run)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
