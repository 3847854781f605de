//! Total-variation regularization of chattering and Zeno optimal-control problems.
//!
//! The crate synthesizes Fuller's chattering optimum, solves the
//! TV-penalized problem over bang-bang candidates, builds bounded-TV
//! truncations of the optimum, and regularizes Zeno executions of hybrid
//! automata. Each layer exposes the measured quantities needed for rate
//! studies through [`rates::RateRecord`].

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod fuller;
pub mod hybrid;
pub mod integrate;
pub mod rates;
pub mod solver;
pub mod truncation;

/// Crate version, cited in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use control::{
    check_state_constraints, lagrangian_cost, regularized_cost, simulate, tv, ControlBounds,
    Dynamics, Lagrangian, PiecewiseConstantControl, ProblemSpec, Trajectory,
};
pub use error::{ControlError, FitError, FullerError, HybridError, SolverError, TruncationError};
pub use fuller::{compute_fuller_constant, optimal_cost, synthesize_chattering, FullerSynthesis};
pub use rates::{fit_power_law, Column, PowerLawFit, RateRecord};
