//! Controls, trajectories, and the total-variation regularized cost.
//!
//! Every control is piecewise constant, so its total variation is a finite
//! sum of jump norms. Double-integrator arcs are propagated and integrated in
//! closed form; any other registered dynamics is stepped with a fixed-step
//! fourth-order Runge-Kutta scheme.

use std::fmt;
use std::sync::Arc;

use crate::error::ControlError;
use crate::integrate::{even_steps, rk4_step, simpson};

pub type State = Vec<f64>;
pub type VectorField = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type LagrangianFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;
pub type ConstraintFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A constraint value at or above `-CONSTRAINT_TOL` counts as satisfied.
pub const CONSTRAINT_TOL: f64 = 1e-9;
/// Generic integration step as a fraction of the control horizon.
pub const STEP_FRACTION: f64 = 1e-4;
const CONSTRAINT_SAMPLES: usize = 100;

// ---------------------------------------------------------------------------
// Double-integrator closed forms

/// Exact flow of `x1' = x2, x2' = u` for duration `d` (negative `d` flows backward).
pub fn di_flow(x: [f64; 2], u: f64, d: f64) -> [f64; 2] {
    [x[0] + x[1] * d + 0.5 * u * d * d, x[1] + u * d]
}

/// `∫_0^d x1(s)^2 ds` along a double-integrator arc, as the quintic in `d`.
pub fn di_arc_cost(x: [f64; 2], u: f64, d: f64) -> f64 {
    let (a, v) = (x[0], x[1]);
    d * (a * a + d * (a * v + d * ((v * v + a * u) / 3.0 + d * (v * u / 4.0 + d * u * u / 20.0))))
}

/// `sup_t max(|x1(t)|, |x2(t)|)` over a double-integrator arc.
pub fn di_arc_sup(x: [f64; 2], u: f64, d: f64) -> f64 {
    let end = di_flow(x, u, d);
    let mut m = x[0]
        .abs()
        .max(x[1].abs())
        .max(end[0].abs())
        .max(end[1].abs());
    if u != 0.0 {
        let s = -x[1] / u;
        if s > 0.0 && s < d {
            m = m.max(di_flow(x, u, s)[0].abs());
        }
    }
    m
}

// ---------------------------------------------------------------------------
// Controls

/// Box-shaped admissible control set `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ControlBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len(), "bounds dimension mismatch");
        Self { lower, upper }
    }

    /// `[-1, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Self::new(vec![-1.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }
}

/// A control with finitely many arcs on `[0, t_u]`.
///
/// Values are stored row-major: arc `i` owns `values[i*dim..(i+1)*dim]`. The
/// control is right-continuous: at a breakpoint it takes the value of the arc
/// that starts there.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantControl {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
}

impl PiecewiseConstantControl {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self, ControlError> {
        let dim = values.first().map_or(1, Vec::len);
        if let Some(bad) = values.iter().find(|v| v.len() != dim) {
            return Err(ControlError::Dimension {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::from_flat(breakpoints, values.concat(), dim)
    }

    /// Scalar control from breakpoints and one value per arc.
    pub fn scalar(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, ControlError> {
        Self::from_flat(breakpoints, values, 1)
    }

    /// Scalar control from arc durations (all must be positive).
    pub fn from_durations(durations: &[f64], values: &[f64]) -> Result<Self, ControlError> {
        let mut breakpoints = Vec::with_capacity(durations.len() + 1);
        breakpoints.push(0.0);
        let mut t = 0.0;
        for d in durations {
            t += d;
            breakpoints.push(t);
        }
        Self::scalar(breakpoints, values.to_vec())
    }

    /// The control on the degenerate interval `[0, 0]`.
    pub fn empty(dim: usize) -> Self {
        Self {
            breakpoints: vec![0.0],
            values: Vec::new(),
            dim,
        }
    }

    fn from_flat(
        breakpoints: Vec<f64>,
        values: Vec<f64>,
        dim: usize,
    ) -> Result<Self, ControlError> {
        let valid = breakpoints.first() == Some(&0.0)
            && breakpoints.iter().all(|t| t.is_finite())
            && breakpoints.windows(2).all(|w| w[1] > w[0]);
        if !valid {
            return Err(ControlError::InvalidBreakpoints);
        }
        let expected = (breakpoints.len() - 1) * dim;
        if values.len() != expected {
            return Err(ControlError::ValueCount {
                expected: breakpoints.len() - 1,
                got: values.len() / dim.max(1),
            });
        }
        Ok(Self {
            breakpoints,
            values,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arc_count(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.arc_count() == 0
    }

    pub fn horizon(&self) -> f64 {
        *self
            .breakpoints
            .last()
            .expect("breakpoints are never empty")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn value(&self, arc: usize) -> &[f64] {
        &self.values[arc * self.dim..(arc + 1) * self.dim]
    }

    pub fn duration(&self, arc: usize) -> f64 {
        self.breakpoints[arc + 1] - self.breakpoints[arc]
    }

    pub fn durations(&self) -> Vec<f64> {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Iterates `(start, duration, value)` per arc.
    pub fn arcs(&self) -> impl Iterator<Item = (f64, f64, &[f64])> + '_ {
        (0..self.arc_count()).map(move |i| (self.breakpoints[i], self.duration(i), self.value(i)))
    }

    /// Value at time `t`; `None` outside `[0, t_u]`.
    pub fn value_at(&self, t: f64) -> Option<&[f64]> {
        if self.is_empty() || t < 0.0 || t > self.horizon() {
            return None;
        }
        let idx = self
            .breakpoints
            .partition_point(|b| *b <= t)
            .saturating_sub(1);
        Some(self.value(idx.min(self.arc_count() - 1)))
    }

    /// Total variation: sum of Euclidean norms of consecutive jumps.
    pub fn tv(&self) -> f64 {
        (1..self.arc_count())
            .map(|i| jump_norm(self.value(i - 1), self.value(i)))
            .sum()
    }

    /// Total variation of the restriction to `[0, t]`. With `inclusive` a jump
    /// located exactly at `t` is counted, otherwise only jumps strictly before `t`.
    pub fn tv_until(&self, t: f64, inclusive: bool) -> f64 {
        (1..self.arc_count())
            .filter(|&i| {
                let b = self.breakpoints[i];
                b < t || (inclusive && b == t)
            })
            .map(|i| jump_norm(self.value(i - 1), self.value(i)))
            .sum()
    }

    /// Times at which the value actually changes.
    pub fn switch_times(&self) -> Vec<f64> {
        (1..self.arc_count())
            .filter(|&i| jump_norm(self.value(i - 1), self.value(i)) > 0.0)
            .map(|i| self.breakpoints[i])
            .collect()
    }

    /// Restriction to the half-open window `[0, t)`, re-closed at `t`.
    pub fn restrict(&self, t: f64) -> Self {
        if t >= self.horizon() {
            return self.clone();
        }
        let keep = self.breakpoints.partition_point(|b| *b < t);
        let mut breakpoints = self.breakpoints[..keep].to_vec();
        if keep == 0 {
            return Self::empty(self.dim);
        }
        breakpoints.push(t);
        let values = self.values[..(keep - 1) * self.dim + self.dim].to_vec();
        Self {
            breakpoints,
            values,
            dim: self.dim,
        }
    }

    /// The part on `[t, t_u]`, shifted to start at 0.
    pub fn suffix_from(&self, t: f64) -> Self {
        if t <= 0.0 {
            return self.clone();
        }
        if t >= self.horizon() {
            return Self::empty(self.dim);
        }
        let first = self.breakpoints.partition_point(|b| *b <= t) - 1;
        let mut breakpoints = vec![0.0];
        breakpoints.extend(self.breakpoints[first + 1..].iter().map(|b| b - t));
        Self {
            breakpoints,
            values: self.values[first * self.dim..].to_vec(),
            dim: self.dim,
        }
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &Self) -> Self {
        assert_eq!(
            self.dim, other.dim,
            "cannot concatenate controls of different dimension"
        );
        let offset = self.horizon();
        let mut breakpoints = self.breakpoints.clone();
        breakpoints.extend(other.breakpoints[1..].iter().map(|b| b + offset));
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Self {
            breakpoints,
            values,
            dim: self.dim,
        }
    }

    pub fn check_bounds(&self, bounds: &ControlBounds) -> Result<(), ControlError> {
        if bounds.dim() != self.dim {
            return Err(ControlError::Dimension {
                expected: bounds.dim(),
                got: self.dim,
            });
        }
        for i in 0..self.arc_count() {
            if !bounds.contains(self.value(i)) {
                return Err(ControlError::OutOfBounds {
                    arc: i,
                    value: self.value(i).to_vec(),
                });
            }
        }
        Ok(())
    }

    /// `‖self − other‖_{L¹}` with both controls extended by zero past their horizons.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        let zero = vec![0.0; self.dim];
        let mut knots: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(&other.breakpoints)
            .copied()
            .collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        knots
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let a = self.value_at(mid).unwrap_or(&zero);
                let b = other.value_at(mid).unwrap_or(&zero);
                jump_norm(a, b) * (w[1] - w[0])
            })
            .sum()
    }
}

fn jump_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Appends arcs, merging repeated values and dropping arcs too short to
/// advance the clock.
#[derive(Debug, Clone)]
pub struct ScalarControlBuilder {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl Default for ScalarControlBuilder {
    fn default() -> Self {
        Self {
            breakpoints: vec![0.0],
            values: Vec::new(),
        }
    }
}

impl ScalarControlBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, duration: f64, value: f64) -> &mut Self {
        let t = *self.breakpoints.last().unwrap();
        if duration > 0.0 && t + duration > t {
            if self.values.last() == Some(&value) {
                *self.breakpoints.last_mut().unwrap() = t + duration;
            } else {
                self.breakpoints.push(t + duration);
                self.values.push(value);
            }
        }
        self
    }

    pub fn extend_from(&mut self, control: &PiecewiseConstantControl) -> &mut Self {
        for (_, d, v) in control.arcs() {
            self.push(d, v[0]);
        }
        self
    }

    pub fn build(self) -> PiecewiseConstantControl {
        PiecewiseConstantControl {
            breakpoints: self.breakpoints,
            values: self.values,
            dim: 1,
        }
    }
}

// ---------------------------------------------------------------------------
// Problem description

#[derive(Clone)]
pub enum Dynamics {
    /// `x1' = x2, x2' = u`, propagated in closed form.
    DoubleIntegrator,
    Custom {
        name: String,
        state_dim: usize,
        control_dim: usize,
        field: VectorField,
    },
}

impl Dynamics {
    pub fn state_dim(&self) -> usize {
        match self {
            Dynamics::DoubleIntegrator => 2,
            Dynamics::Custom { state_dim, .. } => *state_dim,
        }
    }

    pub fn control_dim(&self) -> usize {
        match self {
            Dynamics::DoubleIntegrator => 1,
            Dynamics::Custom { control_dim, .. } => *control_dim,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Dynamics::DoubleIntegrator => "double-integrator",
            Dynamics::Custom { name, .. } => name,
        }
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        match self {
            Dynamics::DoubleIntegrator => vec![x[1], u[0]],
            Dynamics::Custom { field, .. } => field(x, u),
        }
    }

    pub fn is_double_integrator(&self) -> bool {
        matches!(self, Dynamics::DoubleIntegrator)
    }
}

impl fmt::Debug for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone)]
pub enum Lagrangian {
    /// `L = x1²`.
    PositionSquared,
    Custom {
        name: String,
        integrand: LagrangianFn,
    },
}

impl Lagrangian {
    pub fn eval(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        match self {
            Lagrangian::PositionSquared => x[0] * x[0],
            Lagrangian::Custom { integrand, .. } => integrand(t, x, u),
        }
    }
}

impl fmt::Debug for Lagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lagrangian::PositionSquared => f.write_str("x1^2"),
            Lagrangian::Custom { name, .. } => f.write_str(name),
        }
    }
}

#[derive(Clone)]
pub struct StateConstraint {
    pub name: String,
    pub h: ConstraintFn,
}

impl fmt::Debug for StateConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h[{}]", self.name)
    }
}

/// Point-to-origin transfer problem with an equibound on admissible candidates.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    dynamics: Dynamics,
    bounds: ControlBounds,
    x0: State,
    lagrangian: Lagrangian,
    constraints: Vec<StateConstraint>,
    equibound: f64,
}

impl ProblemSpec {
    pub const DEFAULT_EQUIBOUND: f64 = 100.0;

    /// Registers a problem; the dynamics must vanish at `(0, 0)`.
    pub fn new(
        dynamics: Dynamics,
        bounds: ControlBounds,
        x0: State,
        lagrangian: Lagrangian,
        equibound: f64,
    ) -> Result<Self, ControlError> {
        if x0.len() != dynamics.state_dim() {
            return Err(ControlError::Dimension {
                expected: dynamics.state_dim(),
                got: x0.len(),
            });
        }
        if bounds.dim() != dynamics.control_dim() {
            return Err(ControlError::Dimension {
                expected: dynamics.control_dim(),
                got: bounds.dim(),
            });
        }
        let at_origin = dynamics.eval(
            &vec![0.0; dynamics.state_dim()],
            &vec![0.0; dynamics.control_dim()],
        );
        let residual = at_origin.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if residual > 0.0 {
            return Err(ControlError::NonzeroEquilibrium(residual));
        }
        if !(equibound > 0.0 && equibound.is_finite()) {
            return Err(ControlError::InvalidEquibound(equibound));
        }
        Ok(Self {
            dynamics,
            bounds,
            x0,
            lagrangian,
            constraints: Vec::new(),
            equibound,
        })
    }

    /// Fuller's problem: double integrator, `|u| ≤ 1`, `L = x1²`.
    pub fn fuller(x0: [f64; 2]) -> Self {
        Self::new(
            Dynamics::DoubleIntegrator,
            ControlBounds::unit(1),
            x0.to_vec(),
            Lagrangian::PositionSquared,
            Self::DEFAULT_EQUIBOUND,
        )
        .expect("built-in Fuller problem is well-formed")
    }

    pub fn with_constraint(
        mut self,
        name: impl Into<String>,
        h: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.constraints.push(StateConstraint {
            name: name.into(),
            h: Arc::new(h),
        });
        self
    }

    pub fn with_equibound(mut self, b: f64) -> Result<Self, ControlError> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(ControlError::InvalidEquibound(b));
        }
        self.equibound = b;
        Ok(self)
    }

    pub fn with_x0(mut self, x0: State) -> Result<Self, ControlError> {
        if x0.len() != self.dynamics.state_dim() {
            return Err(ControlError::Dimension {
                expected: self.dynamics.state_dim(),
                got: x0.len(),
            });
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn bounds(&self) -> &ControlBounds {
        &self.bounds
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn lagrangian(&self) -> &Lagrangian {
        &self.lagrangian
    }

    pub fn constraints(&self) -> &[StateConstraint] {
        &self.constraints
    }

    pub fn equibound(&self) -> f64 {
        self.equibound
    }

    /// Closed-form fast paths apply.
    pub fn is_fuller_like(&self) -> bool {
        self.dynamics.is_double_integrator()
            && matches!(self.lagrangian, Lagrangian::PositionSquared)
    }
}

// ---------------------------------------------------------------------------
// Trajectories

#[derive(Debug, Clone, PartialEq)]
pub enum Propagation {
    ClosedForm,
    /// States on a uniform grid of the arc, both ends included.
    Stepped {
        states: Vec<State>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArcRecord {
    pub start_time: f64,
    pub duration: f64,
    pub start_state: State,
    pub control: Vec<f64>,
    pub propagation: Propagation,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    dynamics: Dynamics,
    initial_state: State,
    arcs: Vec<ArcRecord>,
    final_state: State,
}

impl Trajectory {
    pub fn arcs(&self) -> &[ArcRecord] {
        &self.arcs
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }

    pub fn final_state(&self) -> &[f64] {
        &self.final_state
    }

    pub fn horizon(&self) -> f64 {
        self.arcs.last().map_or(0.0, |a| a.start_time + a.duration)
    }

    /// State at time `t`, held at the final state past the horizon.
    pub fn state_at(&self, t: f64) -> State {
        if t <= 0.0 || self.arcs.is_empty() {
            return if t <= 0.0 {
                self.initial_state.clone()
            } else {
                self.final_state.clone()
            };
        }
        if t >= self.horizon() {
            return self.final_state.clone();
        }
        let idx = self
            .arcs
            .partition_point(|a| a.start_time <= t)
            .saturating_sub(1);
        self.state_in_arc(idx, t - self.arcs[idx].start_time)
    }

    fn state_in_arc(&self, idx: usize, s: f64) -> State {
        let arc = &self.arcs[idx];
        match &arc.propagation {
            Propagation::ClosedForm => {
                let x = di_flow([arc.start_state[0], arc.start_state[1]], arc.control[0], s);
                x.to_vec()
            }
            Propagation::Stepped { states } => {
                let n = states.len() - 1;
                let h = arc.duration / n as f64;
                let k = ((s / h).floor() as usize).min(n - 1);
                let rest = s - k as f64 * h;
                let u = arc.control.clone();
                let dynamics = self.dynamics.clone();
                let field = move |x: &[f64]| dynamics.eval(x, &u);
                rk4_step(&field, &states[k], rest)
            }
        }
    }

    /// `sup_t max_i |x_i(t)|` over the whole horizon.
    pub fn sup_norm(&self) -> f64 {
        let mut m = inf_norm(&self.initial_state).max(inf_norm(&self.final_state));
        for arc in &self.arcs {
            m = m.max(match &arc.propagation {
                Propagation::ClosedForm => di_arc_sup(
                    [arc.start_state[0], arc.start_state[1]],
                    arc.control[0],
                    arc.duration,
                ),
                Propagation::Stepped { states } => {
                    states.iter().map(|x| inf_norm(x)).fold(0.0, f64::max)
                }
            });
        }
        m
    }

    /// `sup_{s ≥ t} |x(s)|_∞`.
    pub fn sup_norm_after(&self, t: f64) -> f64 {
        let mut m = inf_norm(&self.state_at(t)).max(inf_norm(&self.final_state));
        for (i, arc) in self.arcs.iter().enumerate() {
            let end = arc.start_time + arc.duration;
            if end <= t {
                continue;
            }
            let s = (t - arc.start_time).max(0.0);
            m = m.max(match &arc.propagation {
                Propagation::ClosedForm => {
                    let x = self.state_in_arc(i, s);
                    di_arc_sup([x[0], x[1]], arc.control[0], arc.duration - s)
                }
                Propagation::Stepped { states } => {
                    states.iter().map(|x| inf_norm(x)).fold(0.0, f64::max)
                }
            });
        }
        m
    }

    /// Maximum over arc junctions of the gap between an arc's end state and
    /// the next arc's start state.
    pub fn junction_gap(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, arc) in self.arcs.iter().enumerate() {
            let end = self.state_in_arc(i, arc.duration);
            let next = self
                .arcs
                .get(i + 1)
                .map_or(&self.final_state, |a| &a.start_state);
            let gap = end
                .iter()
                .zip(next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(gap);
        }
        worst
    }
}

pub(crate) fn inf_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

pub(crate) fn euclid_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Operations

/// Total variation of a control.
pub fn tv(control: &PiecewiseConstantControl) -> f64 {
    control.tv()
}

/// Simulates the control from the problem's initial state.
pub fn simulate(
    spec: &ProblemSpec,
    control: &PiecewiseConstantControl,
) -> Result<Trajectory, ControlError> {
    simulate_from(spec, spec.x0(), control)
}

/// Simulates from an arbitrary start state; the equibound still applies.
pub fn simulate_from(
    spec: &ProblemSpec,
    x0: &[f64],
    control: &PiecewiseConstantControl,
) -> Result<Trajectory, ControlError> {
    let dynamics = spec.dynamics();
    if control.dim() != dynamics.control_dim() {
        return Err(ControlError::Dimension {
            expected: dynamics.control_dim(),
            got: control.dim(),
        });
    }
    if x0.len() != dynamics.state_dim() {
        return Err(ControlError::Dimension {
            expected: dynamics.state_dim(),
            got: x0.len(),
        });
    }
    control.check_bounds(spec.bounds())?;

    let max_step = STEP_FRACTION * control.horizon();
    let mut arcs = Vec::with_capacity(control.arc_count());
    let mut x = x0.to_vec();
    for (start, d, u) in control.arcs() {
        let (next, propagation) = match dynamics {
            Dynamics::DoubleIntegrator => (
                di_flow([x[0], x[1]], u[0], d).to_vec(),
                Propagation::ClosedForm,
            ),
            Dynamics::Custom { field, .. } => {
                let n = even_steps(d, max_step);
                let h = d / n as f64;
                let f = |y: &[f64]| field(y, u);
                let mut states = Vec::with_capacity(n + 1);
                states.push(x.clone());
                for _ in 0..n {
                    let y = rk4_step(&f, states.last().unwrap(), h);
                    states.push(y);
                }
                (
                    states.last().unwrap().clone(),
                    Propagation::Stepped { states },
                )
            }
        };
        arcs.push(ArcRecord {
            start_time: start,
            duration: d,
            start_state: std::mem::replace(&mut x, next),
            control: u.to_vec(),
            propagation,
        });
    }
    let traj = Trajectory {
        dynamics: dynamics.clone(),
        initial_state: x0.to_vec(),
        arcs,
        final_state: x,
    };
    let measured = control.horizon() + traj.sup_norm();
    if measured > spec.equibound() {
        return Err(ControlError::EquiboundViolation {
            measured,
            bound: spec.equibound(),
        });
    }
    Ok(traj)
}

/// `∫ L(t, x, u) dt` along the trajectory.
///
/// Double-integrator arcs with `L = x1²` use the exact quintic; everything
/// else uses composite Simpson quadrature on a grid no coarser than the
/// integrator's.
pub fn lagrangian_cost(traj: &Trajectory, spec: &ProblemSpec) -> f64 {
    lagrangian_cost_between(traj, spec, 0.0, traj.horizon())
}

/// Running cost restricted to `[t0, t1] ∩ [0, t_u]`.
pub fn lagrangian_cost_between(traj: &Trajectory, spec: &ProblemSpec, t0: f64, t1: f64) -> f64 {
    let horizon = traj.horizon();
    let max_step = STEP_FRACTION * horizon.max(f64::MIN_POSITIVE);
    let mut total = 0.0;
    for (i, arc) in traj.arcs.iter().enumerate() {
        let a = t0.max(arc.start_time);
        let b = t1.min(arc.start_time + arc.duration);
        if b <= a {
            continue;
        }
        let offset = a - arc.start_time;
        total += match (&arc.propagation, spec.lagrangian()) {
            (Propagation::ClosedForm, Lagrangian::PositionSquared) => {
                let x = di_flow(
                    [arc.start_state[0], arc.start_state[1]],
                    arc.control[0],
                    offset,
                );
                di_arc_cost(x, arc.control[0], b - a)
            }
            (Propagation::Stepped { states }, _) if offset == 0.0 && b - a == arc.duration => {
                let h = arc.duration / (states.len() - 1) as f64;
                let samples: Vec<f64> = states
                    .iter()
                    .enumerate()
                    .map(|(k, x)| spec.lagrangian().eval(a + k as f64 * h, x, &arc.control))
                    .collect();
                simpson(&samples, h)
            }
            _ => {
                let n = even_steps(b - a, max_step);
                let h = (b - a) / n as f64;
                let samples: Vec<f64> = (0..=n)
                    .map(|k| {
                        let s = offset + k as f64 * h;
                        let x = traj.state_in_arc(i, s);
                        spec.lagrangian().eval(arc.start_time + s, &x, &arc.control)
                    })
                    .collect();
                simpson(&samples, h)
            }
        };
    }
    total
}

/// `∫ L dt + ε·TV(u)`.
pub fn regularized_cost(
    traj: &Trajectory,
    control: &PiecewiseConstantControl,
    spec: &ProblemSpec,
    epsilon: f64,
) -> f64 {
    lagrangian_cost(traj, spec) + epsilon * control.tv()
}

/// True iff every registered `h_i` stays above `-1e-9` at each junction and
/// on 100 interior samples per arc.
pub fn check_state_constraints(traj: &Trajectory, spec: &ProblemSpec) -> bool {
    if spec.constraints().is_empty() {
        return true;
    }
    let ok = |x: &[f64]| {
        spec.constraints()
            .iter()
            .all(|c| (c.h)(x) >= -CONSTRAINT_TOL)
    };
    if !ok(traj.initial_state()) || !ok(traj.final_state()) {
        return false;
    }
    traj.arcs.iter().enumerate().all(|(i, arc)| {
        (0..=CONSTRAINT_SAMPLES).all(|k| {
            let s = arc.duration * k as f64 / CONSTRAINT_SAMPLES as f64;
            ok(&traj.state_in_arc(i, s))
        })
    })
}

/// `sup_t ‖x_a(t) − x_b(t)‖_∞` with each trajectory held at its final state
/// past its horizon. Exact for closed-form arcs; sampled otherwise.
pub fn sup_deviation(a: &Trajectory, b: &Trajectory) -> f64 {
    let mut knots: Vec<f64> = a
        .arcs
        .iter()
        .chain(&b.arcs)
        .flat_map(|arc| [arc.start_time, arc.start_time + arc.duration])
        .chain([0.0])
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let diff = |t: f64| -> f64 {
        let (xa, xb) = (a.state_at(t), b.state_at(t));
        xa.iter()
            .zip(&xb)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    };
    let mut worst = diff(0.0);
    for w in knots.windows(2) {
        let (s, e) = (w[0], w[1]);
        worst = worst.max(diff(e));
        let mid = 0.5 * (s + e);
        let closed = |traj: &Trajectory| {
            mid >= traj.horizon()
                || traj.arcs.is_empty()
                || matches!(
                    traj.arcs[traj
                        .arcs
                        .partition_point(|x| x.start_time <= mid)
                        .saturating_sub(1)]
                    .propagation,
                    Propagation::ClosedForm
                )
        };
        if closed(a) && closed(b) {
            // difference of position components is a quadratic on (s, e)
            let (xa, xb) = (a.state_at(s), b.state_at(s));
            let ua = piece_control(a, mid);
            let ub = piece_control(b, mid);
            let (d1, dv, du) = (xa[0] - xb[0], xa[1] - xb[1], ua - ub);
            if du != 0.0 {
                let r = -dv / du;
                if r > 0.0 && r < e - s {
                    worst = worst.max((d1 + dv * r + 0.5 * du * r * r).abs());
                }
            }
        } else {
            for k in 1..64 {
                worst = worst.max(diff(s + (e - s) * k as f64 / 64.0));
            }
        }
    }
    worst
}

fn piece_control(traj: &Trajectory, t: f64) -> f64 {
    if t >= traj.horizon() || traj.arcs.is_empty() {
        return 0.0;
    }
    traj.arcs[traj
        .arcs
        .partition_point(|x| x.start_time <= t)
        .saturating_sub(1)]
    .control[0]
}
