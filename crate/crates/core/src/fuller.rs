//! Fuller's chattering optimum for `ẋ1 = x2, ẋ2 = u, |u| ≤ 1, min ∫ x1²`.
//!
//! The optimal feedback switches on the curve `x1 + ζ·x2|x2| = 0`. Every
//! curve is mapped onto itself by the flow (the problem is homogeneous under
//! `(x1, x2, t) ↦ (λ²x1, λx2, λt)`), so ζ is pinned down by the costate
//! instead: the switching function `p2` must vanish again when the `u = −1`
//! arc reaches the mirrored branch.

use crate::control::{
    di_flow, euclid_norm, lagrangian_cost, lagrangian_cost_between, simulate,
    PiecewiseConstantControl, ProblemSpec, ScalarControlBuilder, Trajectory,
};
use crate::error::FullerError;
use crate::truncation::min_time_steer;

const BRACKET: (f64, f64) = (0.40, 0.50);
/// The residual has a removable zero at ζ = 1/2, where the arc runs into the origin.
const OPEN_UPPER: f64 = 0.5 - 1e-9;
const MIN_BISECTION_TOL: f64 = 1e-12;
const MIN_TRUNCATION_TOL: f64 = 1e-13;
/// Relative band around the curve inside which a state counts as on it.
pub const CURVE_TIE_BAND: f64 = 1e-14;

/// `λ(ζ) = sqrt((1 − 2ζ)/(1 + 2ζ))`: speed ratio between consecutive curve crossings.
pub fn contraction(zeta: f64) -> f64 {
    ((1.0 - 2.0 * zeta) / (1.0 + 2.0 * zeta)).sqrt()
}

/// Signed distance-like residual `x1 + ζ·x2|x2|`; positive above the curve.
pub fn curve_residual(zeta: f64, x: [f64; 2]) -> f64 {
    x[0] + zeta * x[1] * x[1].abs()
}

/// Costate at the end of the `u = −1` arc launched from `(−ζv², v)`.
///
/// Returns `(crossing time, state, p1, p2)`. The start costate is `p2 = 0`
/// and `p1 = −ζ²v³`, which makes the Hamiltonian vanish there.
pub fn costate_transfer(zeta: f64, v: f64) -> (f64, [f64; 2], f64, f64) {
    let a = -zeta * v * v;
    let p1_start = -zeta * zeta * v.powi(3);
    let t = v * (1.0 + contraction(zeta));
    let p1 = p1_start - 2.0 * (a * t + v * t * t / 2.0 - t.powi(3) / 6.0);
    let p2 = -p1_start * t + 2.0 * (a * t * t / 2.0 + v * t.powi(3) / 6.0 - t.powi(4) / 24.0);
    (t, di_flow([a, v], -1.0, t), p1, p2)
}

/// Switching function at the next crossing, scaled by `v⁴·λ` so it keeps a
/// sign on the whole open bracket.
pub fn switching_residual(zeta: f64, v: f64) -> f64 {
    let (_, _, _, p2) = costate_transfer(zeta, v);
    p2 / (v.powi(4) * contraction(zeta))
}

/// Distance of the crossing state from the mirrored curve branch, relative to `v²`.
pub fn poincare_residual(zeta: f64, v: f64) -> f64 {
    let (_, end, _, _) = costate_transfer(zeta, v);
    let lambda = contraction(zeta);
    let expected = [zeta * (lambda * v).powi(2), -lambda * v];
    ((end[0] - expected[0]).abs() + (end[1] - expected[1]).abs() * v) / (v * v)
}

/// `(ζ, ρ)` by bisection on the unit-speed switching residual.
pub fn compute_fuller_constant(tol: f64) -> Result<(f64, f64), FullerError> {
    compute_fuller_constant_from(1.0, tol)
}

/// Same root, launched from the curve point with `x2 = start_speed`.
pub fn compute_fuller_constant_from(start_speed: f64, tol: f64) -> Result<(f64, f64), FullerError> {
    if !(tol >= MIN_BISECTION_TOL) {
        return Err(FullerError::InvalidTolerance(tol));
    }
    let v = start_speed.abs();
    if !(v > 0.0 && v.is_finite()) {
        return Err(FullerError::ZeroInitialState);
    }
    let (mut lo, mut hi) = (BRACKET.0, OPEN_UPPER);
    let f_lo = switching_residual(lo, v);
    let f_hi = switching_residual(hi, v);
    if !(f_lo.signum() * f_hi.signum() < 0.0) {
        return Err(FullerError::NoRootBracket {
            lower: BRACKET.0,
            upper: BRACKET.1,
        });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if switching_residual(mid, v).signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let zeta = 0.5 * (lo + hi);
    Ok((zeta, contraction(zeta)))
}

/// Feedback constants plus the radius at which chattering is cut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullerSynthesis {
    pub zeta: f64,
    pub rho: f64,
    pub truncation_tol: f64,
}

impl FullerSynthesis {
    /// Computes ζ to machine-level bisection tolerance.
    pub fn new(truncation_tol: f64) -> Result<Self, FullerError> {
        let (zeta, rho) = compute_fuller_constant(MIN_BISECTION_TOL)?;
        Ok(Self {
            zeta,
            rho,
            truncation_tol,
        })
    }

    pub fn with_truncation_tol(self, truncation_tol: f64) -> Self {
        Self {
            truncation_tol,
            ..self
        }
    }

    /// Feedback sign at `x`: −1 above the curve, +1 below, post-switch sign on it.
    pub fn feedback(&self, x: [f64; 2]) -> f64 {
        let s = curve_residual(self.zeta, x);
        let scale = x[0].abs().max(self.zeta * x[1] * x[1]);
        if s.abs() <= CURVE_TIE_BAND * scale {
            -x[1].signum()
        } else if s > 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    /// Time until the arc with control `u` started at `x` meets the curve.
    pub fn crossing_time(&self, x: [f64; 2], u: f64) -> f64 {
        let (a, v) = (u * x[0], u * x[1]);
        // mirror to the u = −1 case, where x1 + x2²/2 is conserved
        let energy = (v * v - 2.0 * a).max(0.0);
        -v + (energy / (1.0 + 2.0 * self.zeta)).sqrt()
    }
}

/// The truncated chattering optimum from one initial state.
#[derive(Debug, Clone)]
pub struct ChatteringSolution {
    pub spec: ProblemSpec,
    pub control: PiecewiseConstantControl,
    pub trajectory: Trajectory,
    /// `T*`, including the min-time tail.
    pub horizon: f64,
    pub cost: f64,
    /// Sign changes of the chattering part, `t_1 < t_2 < ...`.
    pub switch_times: Vec<f64>,
    /// Time at which chattering stops and the min-time tail begins.
    pub tail_start: f64,
    /// `t_1 + (t_2 − t_1)/(1 − ρ)`.
    pub predicted_horizon: f64,
    /// Running cost of the tail, an upper bound on the truncation error up to `O(δ^{5/2})`.
    pub tail_cost: f64,
}

impl ChatteringSolution {
    pub fn state_at(&self, t: f64) -> [f64; 2] {
        let x = self.trajectory.state_at(t);
        [x[0], x[1]]
    }

    /// Consecutive ratios `(t_{k+1} − t_k)/(t_k − t_{k−1})` of chattering intervals.
    pub fn interval_ratios(&self) -> Vec<f64> {
        let intervals: Vec<f64> = self.switch_times.windows(2).map(|w| w[1] - w[0]).collect();
        intervals.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

/// Runs the switching-curve feedback from `x0` until `|x| < δ`, then closes
/// with the exact minimum-time tail.
pub fn synthesize_chattering(
    x0: [f64; 2],
    synth: &FullerSynthesis,
) -> Result<ChatteringSolution, FullerError> {
    if !(synth.truncation_tol >= MIN_TRUNCATION_TOL) {
        return Err(FullerError::TolTooSmall(synth.truncation_tol));
    }
    if x0 == [0.0, 0.0] {
        return Err(FullerError::ZeroInitialState);
    }
    let spec = ProblemSpec::fuller(x0);
    let mut builder = ScalarControlBuilder::new();
    let mut x = x0;
    let mut u = synth.feedback(x);
    let mut t = 0.0;
    let mut switch_times = Vec::new();
    while euclid_norm(&x) >= synth.truncation_tol {
        let d = synth.crossing_time(x, u);
        if !(d > 0.0) {
            break;
        }
        x = di_flow(x, u, d);
        builder.push(d, u);
        t += d;
        switch_times.push(t);
        u = -u;
    }
    let tail_start = t;
    // the last crossing is a switch only if the tail starts with the next feedback sign
    if switch_times.last() == Some(&tail_start) {
        let tail_sign = min_time_steer(x).0.value_at(0.0).map(|v| v[0]);
        if tail_sign != Some(u) {
            switch_times.pop();
        }
    }
    let (tail, tau) = min_time_steer(x);
    builder.extend_from(&tail);
    let control = builder.build();
    let trajectory = simulate(&spec, &control)?;
    let horizon = control.horizon();
    let cost = lagrangian_cost(&trajectory, &spec);
    let tail_cost = lagrangian_cost_between(&trajectory, &spec, tail_start, tail_start + tau);
    let predicted_horizon = match switch_times.as_slice() {
        [t1, t2, ..] => t1 + (t2 - t1) / (1.0 - synth.rho),
        _ => horizon,
    };
    Ok(ChatteringSolution {
        spec,
        control,
        trajectory,
        horizon,
        cost,
        switch_times,
        tail_start,
        predicted_horizon,
        tail_cost,
    })
}

/// `J*(x0)`; zero at the origin.
pub fn optimal_cost(x0: [f64; 2], synth: &FullerSynthesis) -> Result<f64, FullerError> {
    if x0 == [0.0, 0.0] {
        return Ok(0.0);
    }
    Ok(synthesize_chattering(x0, synth)?.cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth() -> FullerSynthesis {
        FullerSynthesis::new(1e-10).unwrap()
    }

    #[test]
    fn bracket_changes_sign() {
        assert!(switching_residual(0.40, 1.0) > 0.0);
        assert!(switching_residual(OPEN_UPPER, 1.0) < 0.0);
    }

    #[test]
    fn zeta_root_matches_quartic_in_lambda() {
        // independent check: at the root λ solves λ⁴ − 3λ³ − 4λ² − 3λ + 1 = 0
        let (zeta, rho) = compute_fuller_constant(1e-12).unwrap();
        let q = rho.powi(4) - 3.0 * rho.powi(3) - 4.0 * rho * rho - 3.0 * rho + 1.0;
        assert!(q.abs() < 1e-10, "quartic residual {q}");
        assert!(zeta > 0.40 && zeta < 0.50);
    }

    #[test]
    fn costate_is_self_similar_at_the_root() {
        let (zeta, rho) = compute_fuller_constant(1e-12).unwrap();
        let v = 1.7;
        let (_, _, p1, p2) = costate_transfer(zeta, v);
        assert!(p2.abs() < 1e-10);
        // mirrored start costate scaled by λ³
        assert!((p1 - rho.powi(3) * zeta * zeta * v.powi(3)).abs() < 1e-10);
        assert!(poincare_residual(zeta, v) < 1e-14);
    }

    #[test]
    fn tolerance_floor() {
        assert_eq!(
            compute_fuller_constant(1e-13),
            Err(FullerError::InvalidTolerance(1e-13))
        );
        let s = synth().with_truncation_tol(1e-14);
        assert!(matches!(
            synthesize_chattering([1.0, 0.0], &s),
            Err(FullerError::TolTooSmall(_))
        ));
    }

    #[test]
    fn start_on_curve_uses_post_switch_sign() {
        let s = synth();
        let x0 = [-s.zeta, 1.0];
        assert_eq!(s.feedback(x0), -1.0);
        assert_eq!(s.feedback([s.zeta, -1.0]), 1.0);
        let sol = synthesize_chattering(x0, &s).unwrap();
        assert_eq!(sol.control.value(0), &[-1.0]);
        assert!((sol.control.duration(0) - (1.0 + s.rho)).abs() < 1e-12);
    }

    #[test]
    fn unit_position_reference() {
        let s = synth();
        let sol = synthesize_chattering([1.0, 0.0], &s).unwrap();
        let first = (2.0 / (1.0 + 2.0 * s.zeta)).sqrt();
        assert!((sol.switch_times[0] - first).abs() < 1e-12);
        assert!(euclid_norm(sol.trajectory.final_state()) < 1e-10);
        assert!(sol.trajectory.junction_gap() < 1e-12);
        assert!(sol.tail_cost >= 0.0 && sol.tail_cost < 1e-20);
    }

    #[test]
    fn zero_state_has_zero_cost() {
        assert_eq!(optimal_cost([0.0, 0.0], &synth()), Ok(0.0));
        assert_eq!(
            synthesize_chattering([0.0, 0.0], &synth()).unwrap_err(),
            FullerError::ZeroInitialState
        );
    }
}
