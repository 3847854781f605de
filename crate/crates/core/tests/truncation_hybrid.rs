//! Truncation geometry and Zeno executions against closed forms.

use approx::assert_relative_eq;
use bvlab_core::fuller::synthesize_chattering;
use bvlab_core::hybrid::{
    detect_zeno, execute, hybrid_cost, truncate_zeno, HybridCost, HybridSystem,
};
use bvlab_core::truncation::{flow_speed_bound, min_time_steer, truncate, upsilon};
use bvlab_core::{simulate, FullerSynthesis, ProblemSpec};
use proptest::prelude::*;

#[test]
fn cut_state_within_speed_bound_and_steer_within_two_upsilon() {
    let sol = synthesize_chattering([1.0, 0.0], &FullerSynthesis::new(1e-10).unwrap()).unwrap();
    let k = flow_speed_bound(&sol);
    for eta in [1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001] {
        let r = truncate(&sol, eta).unwrap();
        let y = r.cut_state;
        assert!(y[0].abs().max(y[1].abs()) <= k * eta + 1e-15, "eta {eta}");
        assert!(r.tau_eta <= 2.0 * upsilon(y) + 1e-12, "eta {eta}");
        assert!(r.cost_gap >= -1e-15 && r.respects_tv_budget());
        assert!(r.terminal_residual <= 1e-12);
    }
}

#[test]
fn upsilon_from_rest_is_two_sqrt() {
    for x1 in [0.01, 0.5, 2.0, 9.0] {
        assert_relative_eq!(upsilon([x1, 0.0]), 2.0 * x1.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(upsilon([-x1, 0.0]), 2.0 * x1.sqrt(), max_relative = 1e-14);
    }
}

proptest! {
    #[test]
    fn steer_reaches_origin_in_upsilon(x1 in -2.0f64..2.0, x2 in -2.0f64..2.0) {
        prop_assume!(x1.abs() + x2.abs() > 1e-6);
        let (control, tau) = min_time_steer([x1, x2]);
        let spec = ProblemSpec::fuller([x1, x2]);
        let traj = simulate(&spec, &control).unwrap();
        prop_assert!(traj.final_state().iter().all(|v| v.abs() <= 1e-9));
        prop_assert!((tau - upsilon([x1, x2])).abs() <= 1e-12 * (1.0 + tau));
        prop_assert!(control.tv() <= 4.0);
    }
}

#[test]
fn bouncing_ball_impacts_follow_closed_form() {
    let (g, c) = (1.0, 0.5);
    let ball = HybridSystem::bouncing_ball(g, c);
    let traj = execute(&ball, 0, &[1.0, 0.0], f64::MAX, 12, 1e-3)
        .unwrap_err()
        .into_trajectory()
        .unwrap();
    // first fall √(2h/g), then flights of 2c^k √(2h/g)
    let first = (2.0f64).sqrt();
    let mut expect = first;
    for (k, t) in traj.event_times().into_iter().enumerate() {
        assert_relative_eq!(t, expect, max_relative = 1e-12);
        expect += 2.0 * c.powi(k as i32 + 1) * first;
    }
}

#[test]
fn tank_truncation_cost_gap_is_linear() {
    let tank = HybridSystem::water_tank(0.75, 0.5, 0.5, [0.0, 0.0]);
    let mut traj = execute(&tank, 0, &[0.5, 0.5], f64::MAX, 25, 1e-3)
        .unwrap_err()
        .into_trajectory()
        .unwrap();
    let z = detect_zeno(&traj, 6).unwrap();
    assert!(z.is_zeno);
    assert_relative_eq!(z.ratio, 0.5, max_relative = 1e-9);
    traj.zeno = Some(z);
    let cost = HybridCost::per_mode_constant(&[1.0, 1.0]);
    // unit cost measures elapsed time, so the whole execution costs τ∞
    let total = hybrid_cost(&tank, &traj, &cost, 1e-3).unwrap();
    assert_relative_eq!(total.value, z.tau_inf, max_relative = 1e-9);
    let cut = truncate_zeno(&tank, &traj, 4, 1e-3).unwrap();
    assert_eq!(cut.events.len(), 4);
}
