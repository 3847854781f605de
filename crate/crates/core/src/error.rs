//! Error types for every layer of the crate.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("breakpoints must start at 0 and be strictly increasing")]
    InvalidBreakpoints,
    #[error("expected {expected} control values, got {got}")]
    ValueCount { expected: usize, got: usize },
    #[error("control dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("control value {value:?} on arc {arc} lies outside the admissible set")]
    OutOfBounds { arc: usize, value: Vec<f64> },
    #[error("equibound violated: t_u + sup|x| = {measured} exceeds b = {bound}")]
    EquiboundViolation { measured: f64, bound: f64 },
    #[error("dynamics does not vanish at the origin: |f(0,0)| = {0}")]
    NonzeroEquilibrium(f64),
    #[error("equibound must be positive and finite, got {0}")]
    InvalidEquibound(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FullerError {
    #[error("switching residual does not change sign on ({lower}, {upper})")]
    NoRootBracket { lower: f64, upper: f64 },
    #[error("truncation radius {0} is below 1e-13; arc durations would underflow")]
    TolTooSmall(f64),
    #[error("bisection tolerance must be at least 1e-12, got {0}")]
    InvalidTolerance(f64),
    #[error("chattering synthesis needs a nonzero initial state")]
    ZeroInitialState,
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("no nonnegative terminal arcs exist for this sign")]
    Infeasible,
    #[error("no multistart produced a feasible candidate (N = {switches})")]
    AllStartsInfeasible { switches: usize },
    #[error("switching-time solver supports the double integrator only")]
    UnsupportedDynamics,
    #[error("invalid solver input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Fuller(#[from] FullerError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TruncationError {
    #[error("eta = {eta} outside (0, {eta0})")]
    EtaTooLarge { eta: f64, eta0: f64 },
    #[error("invalid sweep grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("degenerate power-law fit: {0}")]
    DegenerateFit(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HybridError {
    #[error("event budget of {max_events} exhausted before the horizon (likely Zeno)")]
    EventOverflow {
        max_events: usize,
        trajectory: Box<crate::hybrid::HybridTrajectory>,
    },
    #[error("Zeno detection inconclusive: {0}")]
    Inconclusive(String),
    #[error("trajectory carries no Zeno estimate")]
    NotZeno,
    #[error("invalid hybrid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Fit(#[from] FitError),
}

impl HybridError {
    /// Recovers the partial execution carried by an `EventOverflow`.
    pub fn into_trajectory(self) -> Option<crate::hybrid::HybridTrajectory> {
        match self {
            HybridError::EventOverflow { trajectory, .. } => Some(*trajectory),
            _ => None,
        }
    }
}
