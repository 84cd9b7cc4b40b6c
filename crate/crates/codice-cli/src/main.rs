//! `codice` command-line interface.

mod commands;
mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{apply_overrides, Overrides, Shape};
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "codice",
    version,
    about = "Counterfactual explanations with diffusion-distance proximity and directional coherence"
)]
struct Cli {
    /// Worker threads for instance-level parallelism (default: available
    /// parallelism; also settable via CODICE_WORKERS). Results do not depend
    /// on this value.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic manifold dataset (CSV + schema document).
    Synth {
        #[arg(long, value_enum)]
        shape: Shape,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Explain a single instance: search for a counterfactual and print the
    /// result record.
    Explain {
        #[arg(long)]
        config: PathBuf,
        /// Index into the (seeded, fixed-order) test split.
        #[arg(long)]
        instance: Option<usize>,
        /// Inline comma-separated row in schema order.
        #[arg(long)]
        row: Option<String>,
        /// Desired outcome: a class index, or lo:hi for regression.
        #[arg(long)]
        desired: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the benchmark protocol over the first eligible test instances.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Single-term ablation runs (each objective term in isolation).
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Proximity/coherence trade-off sweep over a lambda1 grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated lambda1 grid, overriding the config.
        #[arg(long)]
        grid: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn worker_count(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| {
        std::env::var("CODICE_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
}

fn run() -> anyhow::Result<u8> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap would exit 2; keep that status for usage problems only.
            e.print().expect("writing a clap error cannot fail");
            return Ok(if e.use_stderr() {
                commands::EXIT_ERROR
            } else {
                commands::EXIT_OK
            });
        }
    };

    if let Some(n) = worker_count(cli.workers) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow::anyhow!("cannot configure {n} workers: {e}"))?;
    }

    match cli.command {
        Command::Synth {
            shape,
            n,
            noise,
            seed,
            out,
        } => commands::cmd_synth(shape, n, noise, seed, &out),
        Command::Explain {
            config,
            instance,
            row,
            desired,
            overrides,
        } => {
            let mut config = RunConfig::load(&config)?;
            apply_overrides(&mut config, &overrides)?;
            commands::cmd_explain(&config, instance, row.as_deref(), desired.as_deref())
        }
        Command::Benchmark { config, overrides } => {
            let mut config = RunConfig::load(&config)?;
            apply_overrides(&mut config, &overrides)?;
            commands::cmd_benchmark(&config)
        }
        Command::Ablate { config, overrides } => {
            let mut config = RunConfig::load(&config)?;
            apply_overrides(&mut config, &overrides)?;
            commands::cmd_ablate(&config)
        }
        Command::Sweep {
            config,
            grid,
            overrides,
        } => {
            let mut config = RunConfig::load(&config)?;
            apply_overrides(&mut config, &overrides)?;
            commands::cmd_sweep(&config, grid.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::EXIT_ERROR)
        }
    }
}
