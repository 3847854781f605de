//! Double-integrator closed forms against independent quadrature and ODE stepping.

use approx::assert_relative_eq;
use bvlab_core::control::{di_arc_cost, di_arc_sup, di_flow};
use bvlab_core::{lagrangian_cost, simulate, PiecewiseConstantControl, ProblemSpec};
use proptest::prelude::*;

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    rec(
        f,
        a,
        b,
        fa,
        fm,
        fb,
        (b - a) / 6.0 * (fa + 4.0 * fm + fb),
        tol,
        40,
    )
}

/// Explicit position formula, written out separately from the library.
fn position(x: [f64; 2], u: f64, t: f64) -> f64 {
    x[0] + x[1] * t + 0.5 * u * t * t
}

#[test]
fn flow_matches_rk4() {
    let (x, u, d) = ([0.3, -1.2], -1.0, 1.7);
    let mut y = x;
    let h = d / 1000.0;
    for _ in 0..1000 {
        let k = |s: [f64; 2]| [s[1], u];
        let k1 = k(y);
        let k2 = k([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = k([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = k([y[0] + h * k3[0], y[1] + h * k3[1]]);
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let z = di_flow(x, u, d);
    assert_relative_eq!(z[0], y[0], epsilon = 1e-12);
    assert_relative_eq!(z[1], y[1], epsilon = 1e-12);
}

#[test]
fn flow_reverses_in_time() {
    let x = [0.7, 0.2];
    let y = di_flow(x, 1.0, 2.5);
    let back = di_flow(y, 1.0, -2.5);
    assert_relative_eq!(back[0], x[0], epsilon = 1e-14);
    assert_relative_eq!(back[1], x[1], epsilon = 1e-14);
}

#[test]
fn sup_catches_vertex() {
    // x1 = 1 - t + t²/2 on [0, 3]: minimum 1/2 at t = 1, maximum 2.5 at t = 3
    assert_relative_eq!(di_arc_sup([1.0, -1.0], 1.0, 3.0), 2.5, epsilon = 1e-15);
    // x = (0, 1) under u = -1 peaks at x1 = 1/2, where x2 = 0
    assert_relative_eq!(di_arc_sup([0.0, 1.0], -1.0, 1.0), 1.0, epsilon = 1e-15);
}

#[test]
fn piecewise_cost_sums_arcs() {
    let control =
        PiecewiseConstantControl::from_durations(&[0.4, 1.1, 0.3], &[-1.0, 1.0, -1.0]).unwrap();
    let spec = ProblemSpec::fuller([0.5, 0.25]);
    let traj = simulate(&spec, &control).unwrap();
    let mut x = [0.5, 0.25];
    let mut expect = 0.0;
    for (d, u) in [(0.4, -1.0), (1.1, 1.0), (0.3, -1.0)] {
        let x0 = x;
        expect += adaptive_simpson(&|t| position(x0, u, t).powi(2), 0.0, d, 1e-14);
        x = di_flow(x, u, d);
    }
    assert_relative_eq!(lagrangian_cost(&traj, &spec), expect, max_relative = 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn arc_cost_matches_quadrature(
        x1 in -3.0f64..3.0,
        x2 in -3.0f64..3.0,
        positive in any::<bool>(),
        d in 1e-3f64..4.0,
    ) {
        let u = if positive { 1.0 } else { -1.0 };
        let x = [x1, x2];
        let exact = di_arc_cost(x, u, d);
        let quad = adaptive_simpson(&|t| position(x, u, t).powi(2), 0.0, d, 1e-13);
        prop_assert!((exact - quad).abs() <= 1e-10 * quad.max(1.0), "{} vs {}", exact, quad);
    }

    #[test]
    fn tv_is_additive_under_concat(
        a in prop::collection::vec((1e-3f64..1.0, -1.0f64..1.0), 1..6),
        b in prop::collection::vec((1e-3f64..1.0, -1.0f64..1.0), 1..6),
    ) {
        let make = |arcs: &[(f64, f64)]| {
            let (d, v): (Vec<f64>, Vec<f64>) = arcs.iter().copied().unzip();
            PiecewiseConstantControl::from_durations(&d, &v).unwrap()
        };
        let (ca, cb) = (make(&a), make(&b));
        let joined = ca.concat(&cb);
        let jump = (a.last().unwrap().1 - b[0].1).abs();
        prop_assert!((joined.tv() - (ca.tv() + cb.tv() + jump)).abs() <= 1e-12);
        prop_assert!((joined.horizon() - (ca.horizon() + cb.horizon())).abs() <= 1e-12);
    }

    #[test]
    fn flow_composes(x1 in -2.0f64..2.0, x2 in -2.0f64..2.0, s in 0.0f64..2.0, t in 0.0f64..2.0) {
        let once = di_flow([x1, x2], 1.0, s + t);
        let twice = di_flow(di_flow([x1, x2], 1.0, s), 1.0, t);
        prop_assert!((once[0] - twice[0]).abs() <= 1e-12 && (once[1] - twice[1]).abs() <= 1e-12);
    }
}
