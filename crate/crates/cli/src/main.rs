use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ultho_core::harness::{self, ExperimentConfig, HarnessError, Method};
use ultho_core::numfmt::fmt_g;
use ultho_core::service;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_MISMATCH: u8 = 3;

#[derive(Parser)]
#[command(name = "ultho", version, about = "Single-run hyperparameter scheduling for RL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment (every seed) and write logs plus summary.json.
    Run(RunArgs),
    /// Run the experiment once per (c, W) cell.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 5.0])]
        c: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [10, 50, 100])]
        w: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the two-phase relay regardless of the config's method.
    Relay(RunArgs),
    /// Check a decision log against its metadata sidecar.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Serve the ask/tell protocol.
    Serve {
        #[arg(long, conflicts_with = "port")]
        stdio: bool,
        #[arg(long)]
        port: Option<u16>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}

fn load(path: &Path, out: Option<PathBuf>) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if out.is_some() {
        cfg.output_dir = out;
    }
    Ok(cfg)
}

fn dispatch(command: Command) -> Result<ExitCode, HarnessError> {
    match command {
        Command::Run(args) => run(load(&args.config, args.out)?),
        Command::Relay(args) => {
            let mut cfg = load(&args.config, args.out)?;
            cfg.method = Method::Relay;
            cfg.validate()?;
            run(cfg)
        }
        Command::Sweep { config, c, w, out } => {
            let cfg = load(&config, out)?;
            let report = harness::run_sweep(&cfg, &c, &w)?;
            print!("{}", report.table());
            if let Some(k) = report.best_cell {
                println!("best: {}", report.cells[k].label());
            }
            if let Some(s) = report.spread {
                println!("spread: {}", fmt_g(s));
            }
            let failed = report.cells.iter().any(|c| c.failed());
            Ok(if failed { ExitCode::from(EXIT_RUNTIME) } else { ExitCode::SUCCESS })
        }
        Command::Replay { log } => {
            let verdict = harness::replay(&log)?;
            for e in &verdict.ordering_errors {
                println!("ordering: {e}");
            }
            for m in &verdict.mismatches {
                println!("episode {}: {} ({})", m.episode, m.fields.join(","), m.detail);
            }
            println!(
                "{} rows, {} mismatches, {} ordering errors",
                verdict.rows,
                verdict.mismatches.len(),
                verdict.ordering_errors.len()
            );
            Ok(if verdict.is_clean() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_MISMATCH) })
        }
        Command::Serve { stdio, port } => {
            let served = match (stdio, port) {
                (_, Some(p)) => TcpListener::bind(("127.0.0.1", p)).and_then(|l| {
                    eprintln!("listening on {}", l.local_addr()?);
                    service::serve_tcp(l)
                }),
                _ => service::serve_stdio(),
            };
            served.map_err(|e| HarnessError::Io {
                path: "serve".into(),
                source: e,
            })?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run(cfg: ExperimentConfig) -> Result<ExitCode, HarnessError> {
    let report = harness::run_experiment(&cfg)?;
    for s in &report.seeds {
        match (&s.failure, s.final_return) {
            (Some(f), _) => println!("seed {}: failed at episode {}: {}", s.seed, f.episode, f.message),
            (None, Some(r)) => println!("seed {}: final return {}", s.seed, fmt_g(r)),
            (None, None) => println!("seed {}: no episodes", s.seed),
        }
    }
    match (report.mean_final_return, report.stderr_final_return) {
        (Some(m), Some(se)) => println!("mean {} ± {}", fmt_g(m), fmt_g(se)),
        _ => println!("no seed finished"),
    }
    Ok(if report.failed_seeds > 0 { ExitCode::from(EXIT_RUNTIME) } else { ExitCode::SUCCESS })
}
