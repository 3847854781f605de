//! Experiment runner behind the `bvlab` binary.
//!
//! Every experiment writes `<out>/<experiment>.csv` with the columns
//! `param,cost_gap,sup_dev,l1_dev,tv,wall_ms` and a JSON manifest next to it.

pub mod config;
pub mod experiments;
pub mod output;

use bvlab_core::{FitError, FullerError, HybridError, SolverError, TruncationError};
use thiserror::Error;

pub use bvlab_core::rates::fit_power_law;
pub use config::{Experiment, ExperimentConfig, HybridModel, ModelParams};
pub use experiments::{run, RunOutput};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("synthesis failed: {0}")]
    Fuller(#[from] FullerError),
    #[error("solver failed: {0}")]
    Solver(#[from] SolverError),
    #[error("truncation failed: {0}")]
    Truncation(#[from] TruncationError),
    #[error("hybrid execution failed: {0}")]
    Hybrid(#[from] HybridError),
    #[error("rate fit failed: {0}")]
    Fit(#[from] FitError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl LabError {
    /// Process exit status; see the README for the full map.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            LabError::Fuller(_) | LabError::Solver(SolverError::Fuller(_)) => 3,
            LabError::Solver(_) => 4,
            LabError::Truncation(TruncationError::Fit(_))
            | LabError::Hybrid(HybridError::Fit(_))
            | LabError::Fit(_) => 7,
            LabError::Truncation(_) => 5,
            LabError::Hybrid(_) => 6,
            LabError::Io(_) => 8,
        }
    }
}

/// Resolves the config, runs it and writes both artifacts.
pub fn run_and_write(config: ExperimentConfig) -> Result<RunOutput, LabError> {
    let config = config.resolve()?;
    let out = run(&config)?;
    output::write_artifacts(&config, &out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_per_layer() {
        let codes = [
            LabError::Config(String::new()).exit_code(),
            LabError::Fuller(FullerError::ZeroInitialState).exit_code(),
            LabError::Solver(SolverError::Infeasible).exit_code(),
            LabError::Truncation(TruncationError::InvalidGrid(String::new())).exit_code(),
            LabError::Hybrid(HybridError::NotZeno).exit_code(),
            LabError::Fit(FitError::DegenerateFit(String::new())).exit_code(),
            LabError::Io(std::io::Error::other("x")).exit_code(),
        ];
        assert_eq!(codes, [2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(
            LabError::Truncation(TruncationError::Fit(FitError::DegenerateFit(String::new())))
                .exit_code(),
            7
        );
    }
}
