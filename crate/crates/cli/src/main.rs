//! `kinsim`: experiment driver for collisionless transport with partly diffuse walls.

mod artifacts;
mod commands;
mod config;

use clap::{Parser, Subcommand};
use commands::{Context, Failure};
use config::{Axis, ScenarioConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "kinsim", version, about = "Trace eigenproblems, invariant densities and particle simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `outputs.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Geometry, quadrature, stochasticity and predicate checks.
    Validate,
    /// Operators, trace fixed point, additional condition and invariant density.
    Spectral,
    /// Particle simulation with sampled observables.
    Simulate,
    /// One row of key scalars per value of a parameter.
    SweepStudy {
        #[arg(long, value_enum)]
        axis: Option<Axis>,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
}

fn context(cli: &Cli) -> Result<Context, Failure> {
    let path = cli.config.clone().ok_or_else(|| Failure::Config("--config is required".into()))?;
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let cfg = ScenarioConfig::parse(&text, &path).map_err(|e| Failure::Config(e.to_string()))?;
    let config_dir = path.parent().map(PathBuf::from).unwrap_or_default();
    let out = match &cli.out {
        Some(o) => o.clone(),
        None if cfg.outputs.dir.is_absolute() => cfg.outputs.dir.clone(),
        None => config_dir.join(&cfg.outputs.dir),
    };
    let seed = cli.seed.unwrap_or(cfg.run.seed);
    let threads = match cli.threads {
        Some(0) => return Err(Failure::Config("--threads must be positive".into())),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
            n
        }
        None => rayon::current_num_threads(),
    };
    Ok(Context { cfg, config_text: text, config_dir, out, seed, threads })
}

fn run(cli: Cli) -> Result<(), Failure> {
    let ctx = context(&cli)?;
    match cli.command {
        Command::Validate => commands::validate(&ctx),
        Command::Spectral => commands::spectral(&ctx),
        Command::Simulate => commands::simulate(&ctx),
        Command::SweepStudy { axis, values } => commands::sweep(&ctx, axis, values),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("kinsim: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
