use std::path::PathBuf;
use std::process::ExitCode;

use bvlab::config::{parse_f64_grid, parse_point, parse_usize_grid};
use bvlab::{run_and_write, Experiment, ExperimentConfig, HybridModel, LabError};
use clap::Parser;

/// Runs one experiment and writes `<out>/<experiment>.csv` plus a manifest.
#[derive(Debug, Parser)]
#[command(name = "bvlab", version, about)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    experiment: Experiment,
    /// JSON config file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Initial state as `x1,x2`.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Regularization grid: a list or `start:stop:decade|1-2-5`.
    #[arg(long)]
    eps: Option<String>,
    /// Truncation threshold grid, same syntax as `--eps`.
    #[arg(long)]
    eta: Option<String>,
    /// Zeno truncation indices: a list or `lo..hi`.
    #[arg(long)]
    n: Option<String>,
    /// Hybrid model: `water-tank` or `bouncing-ball`.
    #[arg(long)]
    model: Option<String>,
    /// Seed for the randomized solver start.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Synthesis truncation tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Record wall-clock time per row (makes output nondeterministic).
    #[arg(long)]
    timing: bool,
}

fn build_config(cli: Cli) -> Result<ExperimentConfig, LabError> {
    let mut c = match &cli.config {
        Some(path) => {
            let c = ExperimentConfig::from_json_file(path)?;
            if c.experiment != cli.experiment {
                return Err(LabError::Config(format!(
                    "config file is for `{}`, not `{}`",
                    c.experiment.id(),
                    cli.experiment.id()
                )));
            }
            c
        }
        None => ExperimentConfig::new(cli.experiment),
    };
    if let Some(s) = &cli.x0 {
        c.x0 = parse_point(s)?;
    }
    if let Some(s) = &cli.eps {
        c.eps = Some(parse_f64_grid(s)?);
    }
    if let Some(s) = &cli.eta {
        c.eta = Some(parse_f64_grid(s)?);
    }
    if let Some(s) = &cli.n {
        c.n = Some(parse_usize_grid(s)?);
    }
    if let Some(s) = &cli.model {
        c.model = s.parse::<HybridModel>()?;
    }
    if let Some(v) = cli.seed {
        c.seed = v;
    }
    if let Some(v) = cli.out {
        c.out = v;
    }
    if let Some(v) = cli.tol {
        c.tol = v;
    }
    c.timing |= cli.timing;
    Ok(c)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match build_config(cli).and_then(run_and_write) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
