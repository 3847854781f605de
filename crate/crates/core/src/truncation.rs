//! Quasi-optimal truncation of the chattering optimum.
//!
//! `v_η` follows `u*` up to `T* − η` and then steers the cut state to the
//! origin with the minimum-time law, whose total variation is at most 4
//! including both junctions. The minimum-time map `Υ` is Hölder with
//! exponent 1/2 near the origin, which drives the cost-gap rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{
    inf_norm, lagrangian_cost, lagrangian_cost_between, simulate, simulate_from, sup_deviation,
    PiecewiseConstantControl, ScalarControlBuilder, Trajectory,
};
use crate::error::TruncationError;
use crate::fuller::ChatteringSolution;
use crate::rates::{fit_points, is_nonincreasing, PowerLawFit, RateRecord};
use crate::solver::SolutionPath;

/// TV bound of a minimum-time tail, counting both junction jumps.
pub const TAIL_TV_BOUND: f64 = 4.0;
/// Gaps below this multiple of the reference tail cost are arithmetic noise.
pub const RELATIVE_GAP_FLOOR: f64 = 1e-12;

/// Two arcs `(first_sign, −first_sign)` that bring `y` exactly to the origin,
/// or `None` when no nonnegative pair exists for that sign.
pub fn two_arc_durations(y: [f64; 2], first_sign: f64) -> Option<(f64, f64)> {
    let (a, v) = (y[0], y[1]);
    let disc = v * v / 2.0 - first_sign * a;
    let scale = (v * v).max(a.abs());
    if disc < -1e-14 * scale {
        return None;
    }
    let d_b = disc.max(0.0).sqrt();
    let d_a = -first_sign * v + d_b;
    if d_a < -1e-14 * scale.sqrt() {
        return None;
    }
    Some((d_a.max(0.0), d_b))
}

/// `x1 + x2|x2|/2`; positive above the minimum-time switching curve.
pub fn min_time_curve_residual(y: [f64; 2]) -> f64 {
    y[0] + 0.5 * y[1] * y[1].abs()
}

/// Minimum-time bang-bang steering of `y` to the origin and its duration.
pub fn min_time_steer(y: [f64; 2]) -> (PiecewiseConstantControl, f64) {
    if y == [0.0, 0.0] {
        return (PiecewiseConstantControl::empty(1), 0.0);
    }
    let s = min_time_curve_residual(y);
    let sign = if s > 0.0 {
        -1.0
    } else if s < 0.0 {
        1.0
    } else {
        -y[1].signum()
    };
    let (d_a, d_b) = two_arc_durations(y, sign).expect("the minimum-time law is globally feasible");
    let mut b = ScalarControlBuilder::new();
    b.push(d_a, sign).push(d_b, -sign);
    let control = b.build();
    let tau = control.horizon();
    (control, tau)
}

/// `Υ(y)`, the minimum time to reach the origin, in closed form.
pub fn upsilon(y: [f64; 2]) -> f64 {
    let (x1, x2) = (y[0], y[1]);
    if min_time_curve_residual(y) >= 0.0 {
        x2 + 2.0 * (x1 + x2 * x2 / 2.0).max(0.0).sqrt()
    } else {
        -x2 + 2.0 * (-x1 + x2 * x2 / 2.0).max(0.0).sqrt()
    }
}

/// Largest `Υ(y)/|y|^{1/2}` over `samples` uniform draws from the unit disc.
pub fn holder_ratio(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let r = rng.gen::<f64>().sqrt();
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let y = [r * phi.cos(), r * phi.sin()];
        let norm = (y[0] * y[0] + y[1] * y[1]).sqrt();
        if norm > 0.0 {
            worst = worst.max(upsilon(y) / norm.sqrt());
        }
    }
    worst
}

/// `max |ẋ*|_∞` along the optimum, the Lipschitz constant of `x*` in time.
pub fn flow_speed_bound(solution: &ChatteringSolution) -> f64 {
    solution
        .trajectory
        .arcs()
        .iter()
        .map(|arc| arc.start_state[1].abs().max(arc.control[0].abs()))
        .fold(inf_norm(solution.trajectory.final_state()), f64::max)
        .max(1.0)
}

#[derive(Debug, Clone)]
pub struct TruncationResult {
    pub eta: f64,
    pub control: PiecewiseConstantControl,
    pub trajectory: Trajectory,
    /// `T_η = T* − η + τ_η`.
    pub horizon: f64,
    pub tau_eta: f64,
    pub cut_state: [f64; 2],
    pub cost_gap: f64,
    pub sup_dev: f64,
    pub l1_dev: f64,
    pub tv: f64,
    /// `TV(u*|[0, T* − η))`.
    pub tv_head: f64,
    /// Optimal running cost on `[T* − η, T*]`.
    pub reference_tail_cost: f64,
    /// `sup L` over both tails minus `inf L` along `x*` on the cut window.
    pub running_cost_range: (f64, f64),
    pub terminal_residual: f64,
}

impl TruncationResult {
    /// The TV budget inequality for the appended tail.
    pub fn respects_tv_budget(&self) -> bool {
        self.tv <= self.tv_head + TAIL_TV_BOUND
    }

    /// `C̄·τ_η − c·η` with `C̄ = sup L`, `c = inf L` measured on the tails.
    pub fn gap_upper_bound(&self) -> f64 {
        let (c_bar, c) = self.running_cost_range;
        c_bar * self.tau_eta - c * self.eta
    }

    pub fn record(&self) -> RateRecord {
        RateRecord {
            param: self.eta,
            cost_gap: self.cost_gap,
            sup_dev: self.sup_dev,
            l1_dev: self.l1_dev,
            tv: self.tv,
            wall_ms: 0.0,
        }
    }
}

/// Builds `v_η` for `0 < η < T*`. The steering law is global, so `η0 = T*`.
pub fn truncate(
    solution: &ChatteringSolution,
    eta: f64,
) -> Result<TruncationResult, TruncationError> {
    let t_star = solution.horizon;
    if !(eta > 0.0 && eta < t_star) {
        return Err(TruncationError::EtaTooLarge { eta, eta0: t_star });
    }
    let cut = t_star - eta;
    let head = solution.control.restrict(cut);
    let y = solution.state_at(cut);
    let (tail, tau_eta) = min_time_steer(y);
    let mut b = ScalarControlBuilder::new();
    b.extend_from(&head).extend_from(&tail);
    let control = b.build();
    let spec = &solution.spec;
    let trajectory = simulate(spec, &control)?;

    let tail_traj = simulate_from(spec, &y, &tail)?;
    let tail_cost = lagrangian_cost(&tail_traj, spec);
    let reference_tail_cost = lagrangian_cost_between(&solution.trajectory, spec, cut, t_star);
    let cost_gap = tail_cost - reference_tail_cost;

    // |x1| ≤ |x|∞ bounds the Lagrangian on each tail
    let sup_x = tail_traj
        .sup_norm()
        .max(solution.trajectory.sup_norm_after(cut));
    let c_bar = sup_x * sup_x;

    Ok(TruncationResult {
        eta,
        tv: control.tv(),
        tv_head: solution.control.tv_until(cut, false),
        l1_dev: control.l1_distance(&solution.control),
        sup_dev: sup_deviation(&trajectory, &solution.trajectory),
        terminal_residual: inf_norm(trajectory.final_state()),
        horizon: control.horizon(),
        control,
        trajectory,
        tau_eta,
        cut_state: y,
        cost_gap,
        reference_tail_cost,
        running_cost_range: (c_bar, 0.0),
    })
}

#[derive(Debug, Clone)]
pub struct RateSweep {
    /// One result per η, sorted by decreasing η.
    pub results: Vec<TruncationResult>,
    /// Fit of `cost_gap ≈ C η^a` over points above the arithmetic floor.
    pub fit: PowerLawFit,
    pub fitted_points: usize,
    /// `|T_η − T*|`, `‖v_η − u*‖₁` and `‖x_η − x*‖∞` shrink with η.
    pub horizon_monotone: bool,
    pub l1_monotone: bool,
    pub sup_monotone: bool,
}

impl RateSweep {
    /// Records sorted by increasing η.
    pub fn records(&self) -> Vec<RateRecord> {
        self.results
            .iter()
            .rev()
            .map(TruncationResult::record)
            .collect()
    }
}

/// Truncation sweep with a log-log fit of the cost gap against η.
pub fn rate_sweep(
    solution: &ChatteringSolution,
    etas: &[f64],
) -> Result<RateSweep, TruncationError> {
    if etas.len() < 5 {
        return Err(TruncationError::InvalidGrid(format!(
            "need at least 5 eta values, got {}",
            etas.len()
        )));
    }
    let mut sorted = etas.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(TruncationError::InvalidGrid("duplicate eta values".into()));
    }
    let (hi, lo) = (sorted[0], *sorted.last().unwrap());
    if !(lo > 0.0) || (hi / lo).log10() < 2.0 - 1e-12 {
        return Err(TruncationError::InvalidGrid(format!(
            "eta grid [{lo}, {hi}] must be positive and span two decades"
        )));
    }
    let results = sorted
        .iter()
        .map(|&eta| truncate(solution, eta))
        .collect::<Result<Vec<_>, _>>()?;
    let points: Vec<(f64, f64)> = results
        .iter()
        .filter(|r| r.cost_gap > RELATIVE_GAP_FLOOR * r.reference_tail_cost)
        .map(|r| (r.eta, r.cost_gap))
        .collect();
    let fit = fit_points(&points)?;
    let column =
        |f: &dyn Fn(&TruncationResult) -> f64| -> Vec<f64> { results.iter().map(f).collect() };
    Ok(RateSweep {
        fitted_points: points.len(),
        horizon_monotone: is_nonincreasing(
            &column(&|r| (r.horizon - solution.horizon).abs()),
            1e-15,
        ),
        l1_monotone: is_nonincreasing(&column(&|r| r.l1_dev), 0.0),
        sup_monotone: is_nonincreasing(&column(&|r| r.sup_dev), 0.0),
        fit,
        results,
    })
}

/// Smallest `μ` whose cut `T* − μ` keeps `TV(u*|[0, T* − μ))` within `budget`.
///
/// TV of the restriction is a step function with jumps of 2 at the switch
/// times, so the answer is `T* − t_{⌊B/2⌋+1}`, or the tail length once the
/// budget covers every chattering switch.
pub fn mu_for_budget(solution: &ChatteringSolution, budget: f64) -> f64 {
    let allowed = (budget.max(0.0) / 2.0 + 1e-12).floor() as usize;
    let cut = solution
        .switch_times
        .get(allowed)
        .copied()
        .unwrap_or(solution.tail_start)
        .min(solution.tail_start);
    solution.horizon - cut
}

/// One ε of the composite bound `J_L(u_ε) − J* ≤ M̂(μ(ε)^{1/2} + ε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorollaryPoint {
    pub epsilon: f64,
    pub gap: f64,
    pub mu: f64,
    /// Cost gap of the competitor `v_μ`.
    pub competitor_gap: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorollaryReport {
    /// `max(C, M)` with `C = gap(v_μ)/μ^{1/2}` at the largest ε and `M` the tail TV bound.
    pub m_hat: f64,
    pub rate_constant: f64,
    pub points: Vec<CorollaryPoint>,
}

impl CorollaryReport {
    pub fn holds(&self) -> bool {
        self.points.iter().all(|p| p.holds)
    }
}

/// Checks the composite bound along a regularization path.
///
/// The constant is assembled as in the optimality comparison with `v_μ`:
/// `J_L(u_ε) − J* ≤ C μ^{1/2} + ε M`, so `M̂ = max(C, M)` where `C` is measured
/// once, at the largest ε of the path.
pub fn corollary_check(
    solution: &ChatteringSolution,
    path: &SolutionPath,
) -> Result<CorollaryReport, TruncationError> {
    let largest = path
        .records
        .iter()
        .max_by(|a, b| a.epsilon.total_cmp(&b.epsilon))
        .ok_or_else(|| TruncationError::InvalidGrid("empty path".into()))?;
    let mu_max = mu_for_budget(solution, largest.tv);
    let rate_constant = truncate(solution, mu_max)?.cost_gap.max(0.0) / mu_max.sqrt();
    let m_hat = rate_constant.max(TAIL_TV_BOUND);
    let points = path
        .records
        .iter()
        .map(|r| {
            let mu = mu_for_budget(solution, r.tv);
            let competitor_gap = truncate(solution, mu)?.cost_gap;
            let gap = r.lagrangian_cost - solution.cost;
            let bound = m_hat * (mu.sqrt() + r.epsilon);
            Ok(CorollaryPoint {
                epsilon: r.epsilon,
                gap,
                mu,
                competitor_gap,
                bound,
                holds: gap <= bound,
            })
        })
        .collect::<Result<Vec<_>, TruncationError>>()?;
    Ok(CorollaryReport {
        m_hat,
        rate_constant,
        points,
    })
}
