//! Hybrid automata, Zeno detection, and truncation of Zeno executions.
//!
//! Guards are scalar crossing functions: an edge fires when its guard moves
//! from positive to non-positive. Event times are located by bisection on the
//! RK4 sub-step and recorded at the last positive point, so a state restarted
//! after a reset never sits on the wrong side of the surface it just left.

use std::fmt;
use std::sync::Arc;

use crate::error::HybridError;
use crate::integrate::{even_steps, rk4_step, simpson};
use crate::rates::{fit_points, PowerLawFit, RateRecord};

pub type ModeField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type GuardFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type ResetFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type ModeLagrangian = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_WINDOW: usize = 6;
/// Largest relative misfit of the geometric interval model that still counts as Zeno.
pub const ZENO_FIT_TOL: f64 = 1e-6;

#[derive(Clone)]
pub struct Mode {
    pub name: String,
    pub field: ModeField,
}

#[derive(Clone)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub guard: GuardFn,
    /// `None` is the identity.
    pub reset: Option<ResetFn>,
}

/// `(Q, X, f, E, G, R)` with `X_q = ℝ^n` for every mode.
#[derive(Clone)]
pub struct HybridSystem {
    pub name: String,
    pub state_dim: usize,
    pub modes: Vec<Mode>,
    pub edges: Vec<Edge>,
}

impl fmt::Debug for HybridSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HybridSystem")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field(
                "modes",
                &self
                    .modes
                    .iter()
                    .map(|m| m.name.as_str())
                    .collect::<Vec<_>>(),
            )
            .field(
                "edges",
                &self
                    .edges
                    .iter()
                    .map(|e| (e.from, e.to))
                    .collect::<Vec<_>>(),
            )
            .finish()
    }
}

impl HybridSystem {
    pub fn new(name: impl Into<String>, state_dim: usize) -> Self {
        Self {
            name: name.into(),
            state_dim,
            modes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn mode(
        mut self,
        name: impl Into<String>,
        field: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.modes.push(Mode {
            name: name.into(),
            field: Arc::new(field),
        });
        self
    }

    pub fn edge(
        mut self,
        from: usize,
        to: usize,
        guard: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        reset: Option<ResetFn>,
    ) -> Self {
        self.edges.push(Edge {
            from,
            to,
            guard: Arc::new(guard),
            reset,
        });
        self
    }

    /// Two tanks draining at `v1`, `v2`; the inflow `w` goes to tank 1 in
    /// mode 0 and to tank 2 in mode 1. The inflow moves to a tank when its
    /// level reaches its threshold.
    pub fn water_tank(w: f64, v1: f64, v2: f64, thresholds: [f64; 2]) -> Self {
        let [r1, r2] = thresholds;
        Self::new("water-tank", 2)
            .mode("fill-1", move |_| vec![w - v1, -v2])
            .mode("fill-2", move |_| vec![-v1, w - v2])
            .edge(0, 1, move |x| x[1] - r2, None)
            .edge(1, 0, move |x| x[0] - r1, None)
    }

    /// Ball under gravity `g`; impacts reverse the velocity with restitution `c`.
    pub fn bouncing_ball(g: f64, c: f64) -> Self {
        Self::new("bouncing-ball", 2)
            .mode("flight", move |x| vec![x[1], -g])
            .edge(
                0,
                0,
                |x| x[0],
                Some(Arc::new(move |x: &[f64]| vec![x[0], -c * x[1]])),
            )
    }

    pub fn field(&self, q: usize) -> &ModeField {
        &self.modes[q].field
    }

    fn validate(&self, q0: usize, x0: &[f64]) -> Result<(), HybridError> {
        if q0 >= self.modes.len() {
            return Err(HybridError::InvalidInput(format!(
                "mode {q0} does not exist"
            )));
        }
        if x0.len() != self.state_dim {
            return Err(HybridError::InvalidInput(format!(
                "state has dimension {}, expected {}",
                x0.len(),
                self.state_dim
            )));
        }
        if let Some(e) = self
            .edges
            .iter()
            .find(|e| e.from >= self.modes.len() || e.to >= self.modes.len())
        {
            return Err(HybridError::InvalidInput(format!(
                "edge {} -> {} leaves Q",
                e.from, e.to
            )));
        }
        Ok(())
    }
}

/// One continuous arc; `states[k]` is the state at `times[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridArc {
    pub mode: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl HybridArc {
    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn end_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub from: usize,
    pub to: usize,
    pub guard_value: f64,
    pub state_before: Vec<f64>,
    pub state_after: Vec<f64>,
}

/// Geometric model `Δ_{k+1} = r·Δ_k` of the trailing inter-event intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZenoEstimate {
    pub is_zeno: bool,
    pub ratio: f64,
    pub tau_inf: f64,
    pub residual: f64,
}

/// An execution `(τ, q(·), x(·))`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridTrajectory {
    pub arcs: Vec<HybridArc>,
    pub events: Vec<Event>,
    pub zeno: Option<ZenoEstimate>,
}

impl HybridTrajectory {
    /// `τ_0 = 0, τ_1, ...`, one entry per arc start.
    pub fn tau(&self) -> Vec<f64> {
        self.arcs.iter().map(HybridArc::start).collect()
    }

    pub fn event_times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.time).collect()
    }

    pub fn modes(&self) -> Vec<usize> {
        self.arcs.iter().map(|a| a.mode).collect()
    }

    pub fn end_time(&self) -> f64 {
        self.arcs.last().map_or(0.0, HybridArc::end)
    }

    /// `Δ_k = τ_{k+1} − τ_k` over consecutive events.
    pub fn intervals(&self) -> Vec<f64> {
        self.events
            .windows(2)
            .map(|w| w[1].time - w[0].time)
            .collect()
    }

    fn arc_index(&self, t: f64) -> usize {
        self.arcs
            .partition_point(|a| a.start() <= t)
            .saturating_sub(1)
    }

    /// State at `t`, right-continuous at events and held after the end.
    pub fn state_at(&self, system: &HybridSystem, t: f64) -> Vec<f64> {
        let arc = &self.arcs[self.arc_index(t)];
        if t >= arc.end() {
            return arc.end_state().to_vec();
        }
        let k = arc.times.partition_point(|s| *s <= t).saturating_sub(1);
        let field = system.field(arc.mode);
        rk4_step(&|x: &[f64]| field(x), &arc.states[k], t - arc.times[k])
    }

    pub fn mode_at(&self, t: f64) -> usize {
        self.arcs[self.arc_index(t)].mode
    }
}

fn integrate_arc(
    system: &HybridSystem,
    mode: usize,
    t0: f64,
    x0: Vec<f64>,
    until: f64,
    step: f64,
    watch_guards: bool,
) -> (HybridArc, Option<Event>) {
    let field = system.field(mode);
    let f = |x: &[f64]| field(x);
    let outgoing: Vec<&Edge> = if watch_guards {
        system.edges.iter().filter(|e| e.from == mode).collect()
    } else {
        Vec::new()
    };
    let mut times = vec![t0];
    let mut states = vec![x0];
    let mut k: u64 = 0;
    loop {
        let t = *times.last().unwrap();
        if t >= until {
            return (
                HybridArc {
                    mode,
                    times,
                    states,
                },
                None,
            );
        }
        let next_t = (t0 + (k + 1) as f64 * step).min(until);
        let h = next_t - t;
        let x = states.last().unwrap().clone();
        let y = rk4_step(&f, &x, h);
        // earliest guard crossing inside this step
        let mut hit: Option<(f64, &Edge)> = None;
        for e in &outgoing {
            if (e.guard)(&x) > 0.0 && (e.guard)(&y) <= 0.0 {
                let (mut lo, mut hi) = (0.0, h);
                loop {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if (e.guard)(&rk4_step(&f, &x, mid)) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                if hit.is_none_or(|(s, _)| lo < s) {
                    hit = Some((lo, e));
                }
            }
        }
        if let Some((s, e)) = hit {
            let before = rk4_step(&f, &x, s);
            let after = e
                .reset
                .as_ref()
                .map_or_else(|| before.clone(), |r| r(&before));
            let time = t + s;
            if s > 0.0 {
                times.push(time);
                states.push(before.clone());
            }
            let event = Event {
                time,
                from: mode,
                to: e.to,
                guard_value: (e.guard)(&before),
                state_before: before,
                state_after: after,
            };
            return (
                HybridArc {
                    mode,
                    times,
                    states,
                },
                Some(event),
            );
        }
        times.push(next_t);
        states.push(y);
        k += 1;
    }
}

/// Executes from `(q0, x0)` until `horizon` or `max_events` events.
///
/// Reaching the event budget first is reported as `EventOverflow`, which
/// carries the partial execution for Zeno analysis.
pub fn execute(
    system: &HybridSystem,
    q0: usize,
    x0: &[f64],
    horizon: f64,
    max_events: usize,
    step: f64,
) -> Result<HybridTrajectory, HybridError> {
    system.validate(q0, x0)?;
    if max_events == 0 {
        return Err(HybridError::InvalidInput(
            "max_events must be at least 1".into(),
        ));
    }
    if !(step > 0.0 && horizon >= 0.0) {
        return Err(HybridError::InvalidInput(format!(
            "step = {step}, horizon = {horizon}"
        )));
    }
    let mut traj = HybridTrajectory {
        arcs: Vec::new(),
        events: Vec::new(),
        zeno: None,
    };
    let (mut q, mut x, mut t) = (q0, x0.to_vec(), 0.0);
    loop {
        let (arc, event) = integrate_arc(system, q, t, x, horizon, step, true);
        traj.arcs.push(arc);
        match event {
            None => return Ok(traj),
            Some(e) => {
                q = e.to;
                x = e.state_after.clone();
                t = e.time;
                traj.events.push(e);
                if traj.events.len() >= max_events {
                    return Err(HybridError::EventOverflow {
                        max_events,
                        trajectory: Box::new(traj),
                    });
                }
            }
        }
    }
}

/// Fits `Δ_{k+1} = r·Δ_k` to the last `window` intervals.
///
/// Zeno when `r < 1` and the fit is exact to [`ZENO_FIT_TOL`]; then
/// `τ∞ = τ_last + Δ_last·r/(1 − r)`.
pub fn detect_zeno(traj: &HybridTrajectory, window: usize) -> Result<ZenoEstimate, HybridError> {
    if window < 2 {
        return Err(HybridError::InvalidInput(
            "window must be at least 2".into(),
        ));
    }
    if traj.events.len() < window + 2 {
        return Err(HybridError::Inconclusive(format!(
            "{} events recorded, need {}",
            traj.events.len(),
            window + 2
        )));
    }
    let intervals = traj.intervals();
    let tail = &intervals[intervals.len() - window..];
    let points: Vec<(f64, f64)> = tail
        .iter()
        .enumerate()
        .map(|(k, d)| ((k as f64).exp(), *d))
        .collect();
    let fit = fit_points(&points)?;
    let ratio = std::f64::consts::E.powf(fit.exponent);
    if fit.residual > ZENO_FIT_TOL {
        return Err(HybridError::Inconclusive(format!(
            "geometric fit residual {:.3e} exceeds {ZENO_FIT_TOL:e}",
            fit.residual
        )));
    }
    let last = traj.events.last().unwrap().time;
    let is_zeno = ratio < 1.0 - 1e-9;
    let tau_inf = if is_zeno {
        last + tail[window - 1] * ratio / (1.0 - ratio)
    } else {
        f64::INFINITY
    };
    Ok(ZenoEstimate {
        is_zeno,
        ratio,
        tau_inf,
        residual: fit.residual,
    })
}

/// Keeps events `1..=n` of a Zeno execution, then freezes the mode reached at
/// `τ_n` and flows to `τ∞` ignoring every guard.
pub fn truncate_zeno(
    system: &HybridSystem,
    traj_star: &HybridTrajectory,
    n: usize,
    step: f64,
) -> Result<HybridTrajectory, HybridError> {
    let zeno = traj_star
        .zeno
        .filter(|z| z.is_zeno)
        .ok_or(HybridError::NotZeno)?;
    if n >= traj_star.events.len() {
        return Err(HybridError::InvalidInput(format!(
            "n = {n} but only {} events are recorded",
            traj_star.events.len()
        )));
    }
    let mut arcs = traj_star.arcs[..n].to_vec();
    let (q, x, t) = if n == 0 {
        let a = &traj_star.arcs[0];
        (a.mode, a.states[0].clone(), 0.0)
    } else {
        let e = &traj_star.events[n - 1];
        (e.to, e.state_after.clone(), e.time)
    };
    let (arc, _) = integrate_arc(system, q, t, x, zeno.tau_inf, step, false);
    arcs.push(arc);
    Ok(HybridTrajectory {
        arcs,
        events: traj_star.events[..n].to_vec(),
        zeno: None,
    })
}

/// Per-mode running costs `L_q(t, x)`.
#[derive(Clone)]
pub struct HybridCost {
    pub lagrangians: Vec<ModeLagrangian>,
}

impl fmt::Debug for HybridCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HybridCost({} modes)", self.lagrangians.len())
    }
}

impl HybridCost {
    pub fn per_mode_constant(values: &[f64]) -> Self {
        Self {
            lagrangians: values
                .iter()
                .map(|&c| Arc::new(move |_t: f64, _x: &[f64]| c) as ModeLagrangian)
                .collect(),
        }
    }

    pub fn eval(&self, q: usize, t: f64, x: &[f64]) -> f64 {
        (self.lagrangians[q])(t, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    /// Resolved arcs plus the extrapolated Zeno tail.
    pub value: f64,
    pub tail: f64,
    /// `(sup L − inf L)·(τ∞ − τ_M)` over the unresolved tail.
    pub tail_bound: f64,
    pub sup_l: f64,
    pub inf_l: f64,
}

fn arc_cost(
    system: &HybridSystem,
    traj: &HybridTrajectory,
    i: usize,
    cost: &HybridCost,
    step: f64,
) -> (f64, f64, f64) {
    let arc = &traj.arcs[i];
    let (a, b) = (arc.start(), arc.end());
    if b <= a {
        let l = cost.eval(arc.mode, a, &arc.states[0]);
        return (0.0, l, l);
    }
    let n = even_steps(b - a, step);
    let h = (b - a) / n as f64;
    let field = system.field(arc.mode);
    let samples: Vec<f64> = (0..=n)
        .map(|k| {
            let t = if k == n { b } else { a + k as f64 * h };
            let j = arc.times.partition_point(|s| *s <= t).saturating_sub(1);
            let x = if k == n {
                arc.end_state().to_vec()
            } else {
                rk4_step(&|y: &[f64]| field(y), &arc.states[j], t - arc.times[j])
            };
            cost.eval(arc.mode, t, &x)
        })
        .collect();
    let sup = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let inf = samples.iter().copied().fold(f64::INFINITY, f64::min);
    (simpson(&samples, h), sup, inf)
}

/// `C = Σ ∫ L_{q_i}(t, x_i) dt`, with the Zeno tail summed geometrically.
pub fn hybrid_cost(
    system: &HybridSystem,
    traj: &HybridTrajectory,
    cost: &HybridCost,
    step: f64,
) -> Result<CostReport, HybridError> {
    if cost.lagrangians.len() != system.modes.len() {
        return Err(HybridError::InvalidInput(
            "one Lagrangian per mode is required".into(),
        ));
    }
    let per_arc: Vec<(f64, f64, f64)> = (0..traj.arcs.len())
        .map(|i| arc_cost(system, traj, i, cost, step))
        .collect();
    let resolved: f64 = per_arc.iter().map(|c| c.0).sum();
    let sup_l = per_arc
        .iter()
        .map(|c| c.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let inf_l = per_arc.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    let (tail, tail_bound) = match traj.zeno {
        Some(z) if z.is_zeno && per_arc.len() >= 2 => {
            // parity-preserving extrapolation: arc k+2 costs r² times arc k
            let m = per_arc.len();
            let r2 = z.ratio * z.ratio;
            let tail = (per_arc[m - 2].0 + per_arc[m - 1].0) * r2 / (1.0 - r2);
            (tail, (sup_l - inf_l) * (z.tau_inf - traj.end_time()))
        }
        _ => (0.0, 0.0),
    };
    Ok(CostReport {
        value: resolved + tail,
        tail,
        tail_bound,
        sup_l,
        inf_l,
    })
}

/// Cost of `traj` on `[from, end]`, without tail extrapolation.
fn cost_after(
    system: &HybridSystem,
    traj: &HybridTrajectory,
    cost: &HybridCost,
    from: f64,
    step: f64,
) -> f64 {
    let start = traj.arcs.partition_point(|a| a.start() < from);
    debug_assert!(start == traj.arcs.len() || traj.arcs[start].start() == from);
    (start..traj.arcs.len())
        .map(|i| arc_cost(system, traj, i, cost, step).0)
        .sum()
}

#[derive(Debug, Clone)]
pub struct ZenoSweep {
    /// `param = τ∞ − τ_n`, `cost_gap = C(τⁿ) − C(τ*)` (signed), `tv = n`.
    pub records: Vec<RateRecord>,
    pub sup_fit: PowerLawFit,
    pub gap_fit: PowerLawFit,
    /// `sup L` and `inf L` measured along both executions.
    pub c_tilde: f64,
    pub c: f64,
    pub bound_holds: bool,
}

/// Truncation sweep of a Zeno execution over `ns`.
pub fn zeno_rate_sweep(
    system: &HybridSystem,
    traj_star: &HybridTrajectory,
    ns: &[usize],
    cost: &HybridCost,
    step: f64,
) -> Result<ZenoSweep, HybridError> {
    let zeno = traj_star
        .zeno
        .filter(|z| z.is_zeno)
        .ok_or(HybridError::NotZeno)?;
    if ns.len() < 5 || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HybridError::InvalidInput(
            "ns must be increasing with at least 5 values".into(),
        ));
    }
    let star_cost = hybrid_cost(system, traj_star, cost, step)?;
    let horizon_star = traj_star.end_time();
    let mut c_tilde = star_cost.sup_l;
    let mut c = star_cost.inf_l;
    let mut records = Vec::with_capacity(ns.len());
    for &n in ns {
        let trunc = truncate_zeno(system, traj_star, n, step)?;
        let tau_n = if n == 0 {
            0.0
        } else {
            traj_star.events[n - 1].time
        };
        let frozen = arc_cost(system, &trunc, trunc.arcs.len() - 1, cost, step);
        c_tilde = c_tilde.max(frozen.1);
        c = c.min(frozen.2);
        let reference = cost_after(system, traj_star, cost, tau_n, step) + star_cost.tail;
        let sup_dev = sup_deviation_between(system, traj_star, &trunc, tau_n, horizon_star);
        records.push(RateRecord {
            param: zeno.tau_inf - tau_n,
            cost_gap: frozen.0 - reference,
            sup_dev,
            l1_dev: 0.0,
            tv: n as f64,
            wall_ms: 0.0,
        });
    }
    let sup_pts: Vec<(f64, f64)> = records.iter().map(|r| (r.param, r.sup_dev)).collect();
    let gap_pts: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.param, r.cost_gap.abs()))
        .collect();
    let bound_holds = records
        .iter()
        .all(|r| r.cost_gap.abs() <= (c_tilde - c) * r.param + star_cost.tail_bound);
    records.sort_by(|a, b| a.param.total_cmp(&b.param));
    Ok(ZenoSweep {
        sup_fit: fit_points(&sup_pts)?,
        gap_fit: fit_points(&gap_pts)?,
        records,
        c_tilde,
        c,
        bound_holds,
    })
}

/// `sup ‖x_a − x_b‖∞` on `[from, to]`, sampled at both grids and all events.
pub fn sup_deviation_between(
    system: &HybridSystem,
    a: &HybridTrajectory,
    b: &HybridTrajectory,
    from: f64,
    to: f64,
) -> f64 {
    let mut times: Vec<f64> = a
        .arcs
        .iter()
        .chain(&b.arcs)
        .flat_map(|arc| arc.times.iter().copied())
        .filter(|t| *t >= from && *t <= to)
        .chain([from, to])
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
        .iter()
        .map(|&t| {
            let (xa, xb) = (a.state_at(system, t), b.state_at(system, t));
            xa.iter()
                .zip(&xb)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}
