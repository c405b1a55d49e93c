use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use featlab::experiments::{self, lb_table, run_checks, write_lb_csv, CheckOptions, ExperimentConfig, RunOptions, Suite};

#[derive(Parser)]
#[command(name = "featlab", version, about = "Layer-wise feature learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Concurrent cells (0 = one per core).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Added to every configured seed.
        #[arg(long, env = "FEATLAB_SEED_OFFSET", default_value_t = 0, hide = true)]
        seed_offset: u64,
    },
    /// Run an invariant suite: gegenbauer, kernel, training, analysis or all.
    Check {
        #[arg(long)]
        suite: String,
        /// Truncate the ReLU kernel at this degree (for mutation testing).
        #[arg(long)]
        kernel_k_max: Option<usize>,
    },
    /// Two-layer lower-bound certificates for every (d, m, B) combination.
    LbTable {
        #[arg(long = "d", value_delimiter = ',', num_args = 0..)]
        d: Vec<usize>,
        #[arg(long = "m", value_delimiter = ',', num_args = 0..)]
        m: Vec<f64>,
        #[arg(long = "B", value_delimiter = ',', num_args = 0..)]
        b: Vec<f64>,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        c_sigma: f64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the library version.
    Version,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, workers, seed_offset } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let started = Instant::now();
            let records = experiments::run(&cfg, RunOptions { workers, seed_offset })?;
            let failed: Vec<_> = records.iter().filter(|r| !r.is_ok()).collect();
            eprintln!(
                "{} cells in {:.1}s, {} failed; wrote {}",
                records.len(),
                started.elapsed().as_secs_f64(),
                failed.len(),
                cfg.output_path.display()
            );
            for r in &failed {
                if let Err(e) = &r.outcome {
                    eprintln!("  n={} seed={}: {e}", r.n, r.seed);
                }
            }
            Ok(if failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Check { suite, kernel_k_max } => {
            let suite: Suite = suite.parse()?;
            let started = Instant::now();
            let rows = run_checks(suite, CheckOptions { kernel_k_max });
            let mut out = io::stdout().lock();
            for row in &rows {
                writeln!(out, "{row}")?;
            }
            let failed = rows.iter().filter(|r| !r.passed).count();
            writeln!(
                out,
                "{} checks, {} failed ({:.1}s)",
                rows.len(),
                failed,
                started.elapsed().as_secs_f64()
            )?;
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::LbTable { d, m, b, alpha, c_sigma, output } => {
            let rows = lb_table(&d, &m, &b, alpha, c_sigma);
            match output {
                Some(path) => {
                    let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    write_lb_csv(&rows, file)?;
                }
                None => write_lb_csv(&rows, io::stdout().lock())?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Version => {
            println!("featlab {}", featlab::VERSION);
            Ok(ExitCode::SUCCESS)
        }
    }
}
