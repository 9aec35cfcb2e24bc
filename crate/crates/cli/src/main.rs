use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mlpf_cli::config::ExperimentConfig;
use mlpf_cli::{run_with_threads, selfcheck, validate, write_csv};
use mlpf_core::prelude::Method;

#[derive(Parser)]
#[command(
    name = "mlpf",
    version,
    about = "Particle-filter and multilevel particle-filter option pricing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price a single (method, level) cell.
    Price {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        level: Option<u32>,
    },
    /// Run every (method, level) cell of the config.
    Bench {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Statistical self-tests of the coupled kernel and resampler.
    Check {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; overrides the config, `-` for stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

const CONFIG_ERROR: u8 = 2;
const RUN_ERROR: u8 = 1;

fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").split_whitespace().collect::<Vec<_>>().join(" ")
}

fn load(run: &RunArgs, method: Option<Method>, level: Option<u32>) -> Result<ExperimentConfig, String> {
    let mut config = ExperimentConfig::load(&run.config).map_err(|e| one_line(&e))?;
    if let Some(seed) = run.seed {
        config.seed = seed;
    }
    if let Some(out) = &run.out {
        config.output = Some(out.clone());
    }
    if let Some(m) = method {
        config.methods = vec![m];
    } else {
        config.methods.truncate(1);
    }
    if let Some(l) = level {
        config.levels = vec![l];
    }
    Ok(config)
}

fn execute(config: &ExperimentConfig, threads: usize) -> ExitCode {
    if let Some(d) = validate(config).first() {
        eprintln!("config error: {d}");
        return ExitCode::from(CONFIG_ERROR);
    }
    if let Err(e) = config.problem() {
        eprintln!("config error: {e}");
        return ExitCode::from(CONFIG_ERROR);
    }
    let rows = match run_with_threads(config, threads) {
        Ok(rows) => rows,
        Err(e) => {
            eprintln!("simulation error: {}", one_line(&e));
            return ExitCode::from(RUN_ERROR);
        }
    };
    let written = match config.output.as_deref() {
        Some(p) if p.as_os_str() != "-" => File::create(p)
            .map_err(anyhow::Error::from)
            .and_then(|f| write_csv(&rows, BufWriter::new(f))),
        _ => write_csv(&rows, io::stdout().lock()),
    };
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("output error: {}", one_line(&e));
            ExitCode::from(RUN_ERROR)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Price { run, method, level } => match load(&run, method, level) {
            Ok(mut config) => {
                config.levels.truncate(1);
                execute(&config, run.threads)
            }
            Err(e) => {
                eprintln!("config error: {e}");
                ExitCode::from(CONFIG_ERROR)
            }
        },
        Command::Bench { run } => {
            let loaded = ExperimentConfig::load(&run.config).map(|mut c| {
                if let Some(seed) = run.seed {
                    c.seed = seed;
                }
                if let Some(out) = &run.out {
                    c.output = Some(out.clone());
                }
                c
            });
            match loaded {
                Ok(config) => execute(&config, run.threads),
                Err(e) => {
                    eprintln!("config error: {}", one_line(&e));
                    ExitCode::from(CONFIG_ERROR)
                }
            }
        }
        Command::Check { seed, samples, draws } => match selfcheck::run_all(seed, samples, draws) {
            Ok(outcomes) => {
                let mut out = io::stdout().lock();
                let mut failed = 0;
                for o in &outcomes {
                    let _ = writeln!(out, "{o}");
                    failed += usize::from(!o.passed);
                }
                let _ = writeln!(out, "{} checks, {} failed", outcomes.len(), failed);
                if failed == 0 {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(RUN_ERROR)
                }
            }
            Err(e) => {
                eprintln!("simulation error: {e}");
                ExitCode::from(RUN_ERROR)
            }
        },
    }
}
