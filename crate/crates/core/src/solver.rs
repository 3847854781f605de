//! TV-regularized Fuller problem over alternating bang-bang candidates.
//!
//! A candidate with `N` switches has `N + 1` arcs. The first `N − 1`
//! durations are free; the last two are eliminated by the closed-form
//! two-arc solve to the origin. For fixed `N` the penalty `2εN` is constant,
//! so the inner problem is independent of ε and its optimum is cached across
//! a whole regularization path. This keeps `V(ε) = min_N (J_N + 2εN)` an exact
//! minimum of affine functions.

use std::collections::BTreeMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::control::{
    di_arc_cost, di_arc_sup, di_flow, inf_norm, simulate, PiecewiseConstantControl, ProblemSpec,
};
use crate::error::SolverError;
use crate::fuller::{synthesize_chattering, FullerSynthesis};
use crate::truncation::{two_arc_durations, upsilon};

pub const DEFAULT_N_MAX: usize = 40;
/// Durations at or below this are treated as a lost switch.
pub const DEGENERATE_DURATION: f64 = 1e-12;
const SCAN_POINTS: usize = 16;
const GOLDEN_ITERS: usize = 64;
const MAX_SWEEPS: usize = 400;
const LADDER_FACTORS: [f64; 4] = [0.5, 1.0, 1.5, 2.0];
const UNIFORM_FACTORS: [f64; 3] = [0.5, 1.0, 1.5];
/// Relative band inside which two costs count as tied.
const TIE_BAND: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Minus, Sign::Plus];

    pub fn value(self) -> f64 {
        match self {
            Sign::Minus => -1.0,
            Sign::Plus => 1.0,
        }
    }
}

/// Alternating ±1 control given by its first sign and arc durations.
#[derive(Debug, Clone, PartialEq)]
pub struct BangBangCandidate {
    pub initial_sign: Sign,
    pub durations: Vec<f64>,
    pub lagrangian_cost: f64,
    pub terminal_residual: f64,
}

impl BangBangCandidate {
    /// Number of switches `N`.
    pub fn switches(&self) -> usize {
        self.durations.len().saturating_sub(1)
    }

    pub fn tv(&self) -> f64 {
        2.0 * self.switches() as f64
    }

    pub fn horizon(&self) -> f64 {
        self.durations.iter().sum()
    }

    pub fn regularized_cost(&self, epsilon: f64) -> f64 {
        self.lagrangian_cost + epsilon * self.tv()
    }

    pub fn is_degenerate(&self) -> bool {
        self.durations.iter().any(|d| *d <= DEGENERATE_DURATION)
    }

    pub fn control(&self) -> PiecewiseConstantControl {
        let s = self.initial_sign.value();
        let values: Vec<f64> = (0..self.durations.len())
            .map(|i| if i % 2 == 0 { s } else { -s })
            .collect();
        PiecewiseConstantControl::from_durations(&self.durations, &values)
            .expect("candidate durations are positive")
    }
}

/// Terminal pair `(d_a, d_b)` steering `state` to the origin with signs
/// `first_sign, −first_sign`.
pub fn solve_terminal_arcs(state: [f64; 2], first_sign: Sign) -> Result<(f64, f64), SolverError> {
    if state == [0.0, 0.0] {
        return Err(SolverError::InvalidInput(
            "state is already at the origin".into(),
        ));
    }
    two_arc_durations(state, first_sign.value()).ok_or(SolverError::Infeasible)
}

/// Closed-form Lagrangian cost of the candidate with free durations `free`;
/// `None` when the terminal solve fails or the equibound is violated.
pub fn evaluate(x0: [f64; 2], sign: Sign, free: &[f64], equibound: f64) -> Option<(f64, [f64; 2])> {
    let mut x = x0;
    let mut u = sign.value();
    let mut cost = 0.0;
    let mut time = 0.0;
    let mut sup = inf_norm(&x0);
    for &d in free {
        if !(d >= 0.0) {
            return None;
        }
        cost += di_arc_cost(x, u, d);
        sup = sup.max(di_arc_sup(x, u, d));
        x = di_flow(x, u, d);
        time += d;
        u = -u;
    }
    let (da, db) = if x == [0.0, 0.0] {
        (0.0, 0.0)
    } else {
        two_arc_durations(x, u)?
    };
    cost += di_arc_cost(x, u, da);
    sup = sup.max(di_arc_sup(x, u, da));
    let y = di_flow(x, u, da);
    cost += di_arc_cost(y, -u, db);
    sup = sup.max(di_arc_sup(y, -u, db));
    if time + da + db + sup > equibound {
        return None;
    }
    Some((cost, [da, db]))
}

/// Minimizes `f` by cyclic coordinate descent. Each coordinate is searched by
/// a coarse scan of `[0, upper]` and a local bracket around the current value,
/// both refined by golden section. After every sweep the sweep displacement
/// is tried as an extra search direction.
///
/// Returns the minimizer, its value and the trace of accepted values.
pub fn coordinate_descent<F>(f: F, start: Vec<f64>, upper: f64) -> (Vec<f64>, f64, Vec<f64>)
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = start;
    let mut fx = f(&x);
    let mut trace = vec![fx];
    if x.is_empty() {
        return (x, fx, trace);
    }
    for _ in 0..MAX_SWEEPS {
        let before = x.clone();
        let f_before = fx;
        for i in 0..x.len() {
            let mut probe = x.clone();
            let mut line = |t: f64| {
                probe[i] = t;
                f(&probe)
            };
            let global = scan_and_refine(&mut line, 0.0, upper);
            let half = 0.5 * x[i].max(1e-6 * upper);
            let local = golden(&mut line, (x[i] - half).max(0.0), x[i] + half);
            let (t, v) = if local.1 <= global.1 { local } else { global };
            if v < fx {
                x[i] = t;
                fx = v;
                trace.push(fx);
            }
        }
        let dir: Vec<f64> = x.iter().zip(&before).map(|(a, b)| a - b).collect();
        if dir.iter().any(|d| *d != 0.0) {
            let base = x.clone();
            let mut line = |s: f64| {
                let p: Vec<f64> = base.iter().zip(&dir).map(|(b, d)| b + s * d).collect();
                f(&p)
            };
            let (s, v) = scan_and_refine(&mut line, -1.0, 4.0);
            if v < fx {
                x = base.iter().zip(&dir).map(|(b, d)| b + s * d).collect();
                fx = v;
                trace.push(fx);
            }
        }
        if !(f_before - fx > 1e-16 * fx.abs().max(1e-300)) {
            break;
        }
    }
    (x, fx, trace)
}

fn scan_and_refine(f: &mut impl FnMut(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let h = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let (k, _) = (0..SCAN_POINTS).map(|k| (k, f(lo + k as f64 * h))).fold(
        (0, f64::INFINITY),
        |best, cur| if cur.1 < best.1 { cur } else { best },
    );
    let a = lo + (k as f64 - 1.0).max(0.0) * h;
    let b = lo + ((k + 1).min(SCAN_POINTS - 1)) as f64 * h;
    golden(f, a, b)
}

fn golden(f: &mut impl FnMut(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let (fa, fb) = (f(a), f(b));
    [(a, fa), (b, fb), (c, fc), (d, fd)]
        .into_iter()
        .fold(
            (a, f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
}

/// Knobs of the multistart search; the defaults are the reproducible setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub n_max: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            n_max: DEFAULT_N_MAX,
            seed: 0,
        }
    }
}

fn fuller_point(spec: &ProblemSpec) -> Result<[f64; 2], SolverError> {
    if !spec.is_fuller_like() {
        return Err(SolverError::UnsupportedDynamics);
    }
    let x0 = spec.x0();
    let x0 = [x0[0], x0[1]];
    if x0 == [0.0, 0.0] {
        return Err(SolverError::InvalidInput("x0 is the origin".into()));
    }
    Ok(x0)
}

/// The eight start vectors: four geometric ladders built from the chattering
/// intervals and ρ, three uniform splits of the minimum time, one seeded draw.
fn starts(x0: [f64; 2], sign: Sign, free: usize, seed: u64) -> Result<Vec<Vec<f64>>, SolverError> {
    let synth = FullerSynthesis::new(1e-10)?;
    let chatter = synthesize_chattering(x0, &synth)?;
    let mut ladder: Vec<f64> = std::iter::once(0.0)
        .chain(chatter.switch_times.iter().copied())
        .collect::<Vec<_>>()
        .windows(2)
        .map(|w| w[1] - w[0])
        .collect();
    if synth.feedback(x0) != sign.value() {
        // opposite first sign: begin with a short arc, then follow the ladder
        ladder.insert(0, 0.1 * ladder.first().copied().unwrap_or(1.0));
    }
    while ladder.len() < free {
        let last = *ladder.last().unwrap();
        ladder.push(last * synth.rho);
    }
    let t_min = upsilon(x0).max(1e-12);
    let mut out = Vec::with_capacity(8);
    for f in LADDER_FACTORS {
        out.push(ladder[..free].iter().map(|d| f * d).collect());
    }
    for f in UNIFORM_FACTORS {
        out.push(vec![f * t_min / (free + 1) as f64; free]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((free as u64) << 8) ^ (sign as u64));
    out.push(
        (0..free)
            .map(|_| rng.gen_range(0.0..2.0 * t_min / (free + 1) as f64))
            .collect(),
    );
    Ok(out)
}

/// Best `N`-switch candidate with the given first sign. The objective is
/// `regularized_cost`, which for fixed `N` differs from the Lagrangian cost
/// by the constant `2εN`.
pub fn optimize_durations(
    n: usize,
    sign: Sign,
    epsilon: f64,
    spec: &ProblemSpec,
) -> Result<BangBangCandidate, SolverError> {
    optimize_with(n, sign, epsilon, spec, &SolverOptions::default()).map(|(c, _)| c)
}

/// As [`optimize_durations`], also returning the accepted-value trace of the winning start.
pub fn optimize_with(
    n: usize,
    sign: Sign,
    epsilon: f64,
    spec: &ProblemSpec,
    options: &SolverOptions,
) -> Result<(BangBangCandidate, Vec<f64>), SolverError> {
    if n == 0 {
        return Err(SolverError::InvalidInput("N must be at least 1".into()));
    }
    if !(epsilon >= 0.0) {
        return Err(SolverError::InvalidInput(format!("epsilon = {epsilon}")));
    }
    let x0 = fuller_point(spec)?;
    let b = spec.equibound();
    let penalty = 2.0 * epsilon * n as f64;
    let objective =
        |free: &[f64]| evaluate(x0, sign, free, b).map_or(f64::INFINITY, |(c, _)| c + penalty);
    let free = n - 1;
    let upper = 3.0 * upsilon(x0);
    let runs: Vec<(Vec<f64>, f64, Vec<f64>)> = starts(x0, sign, free, options.seed)?
        .into_par_iter()
        .map(|s| coordinate_descent(objective, s, upper))
        .collect();
    let (best, value, trace) = runs
        .into_iter()
        .filter(|r| r.1.is_finite())
        .fold(None::<(Vec<f64>, f64, Vec<f64>)>, |acc, r| match acc {
            Some(a) if a.1 <= r.1 => Some(a),
            _ => Some(r),
        })
        .ok_or(SolverError::AllStartsInfeasible { switches: n })?;
    let candidate = assemble(x0, sign, best, spec)?;
    debug_assert!((candidate.regularized_cost(epsilon) - value).abs() <= 1e-12 * value.max(1.0));
    Ok((candidate, trace))
}

fn assemble(
    x0: [f64; 2],
    sign: Sign,
    free: Vec<f64>,
    spec: &ProblemSpec,
) -> Result<BangBangCandidate, SolverError> {
    let (cost, [da, db]) =
        evaluate(x0, sign, &free, spec.equibound()).ok_or(SolverError::Infeasible)?;
    let mut durations = free;
    durations.extend([da, db]);
    let mut candidate = BangBangCandidate {
        initial_sign: sign,
        durations,
        lagrangian_cost: cost,
        terminal_residual: 0.0,
    };
    if !candidate.is_degenerate() {
        let traj = simulate(spec, &candidate.control())?;
        candidate.terminal_residual = inf_norm(traj.final_state());
    }
    Ok(candidate)
}

/// Per-`(N, sign)` optimum cache; entries do not depend on ε.
#[derive(Debug, Default)]
pub struct CandidateCache {
    entries: Mutex<BTreeMap<(usize, Sign), Option<BangBangCandidate>>>,
}

impl CandidateCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn get_or_solve(
        &self,
        n: usize,
        sign: Sign,
        spec: &ProblemSpec,
        options: &SolverOptions,
    ) -> Result<Option<BangBangCandidate>, SolverError> {
        if let Some(hit) = self.entries.lock().unwrap().get(&(n, sign)) {
            return Ok(hit.clone());
        }
        let solved = match optimize_with(n, sign, 0.0, spec, options) {
            Ok((c, _)) if !c.is_degenerate() => Some(c),
            Ok(_) | Err(SolverError::AllStartsInfeasible { .. }) | Err(SolverError::Infeasible) => {
                None
            }
            Err(e) => return Err(e),
        };
        self.entries
            .lock()
            .unwrap()
            .insert((n, sign), solved.clone());
        Ok(solved)
    }
}

/// `u_ε`: sweeps `N = 1..N_max` and both signs, keeping the least
/// `J_L + 2εN`. Stops once `J_{N−2} − J_N < 4ε` for two consecutive `N`.
pub fn solve_regularized(
    epsilon: f64,
    spec: &ProblemSpec,
) -> Result<BangBangCandidate, SolverError> {
    solve_cached(
        epsilon,
        spec,
        &SolverOptions::default(),
        &CandidateCache::new(),
    )
}

pub fn solve_cached(
    epsilon: f64,
    spec: &ProblemSpec,
    options: &SolverOptions,
    cache: &CandidateCache,
) -> Result<BangBangCandidate, SolverError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(SolverError::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    fuller_point(spec)?;
    let mut best: Option<BangBangCandidate> = None;
    let mut best_j: Vec<f64> = Vec::new();
    let mut stalls = 0;
    for n in 1..=options.n_max.max(1) {
        let per_sign: Vec<Option<BangBangCandidate>> = Sign::BOTH
            .par_iter()
            .map(|&s| cache.get_or_solve(n, s, spec, options))
            .collect::<Result<_, _>>()?;
        let mut j_n = f64::INFINITY;
        for c in per_sign.into_iter().flatten() {
            j_n = j_n.min(c.lagrangian_cost);
            let better = match &best {
                None => true,
                Some(b) => {
                    let (vc, vb) = (c.regularized_cost(epsilon), b.regularized_cost(epsilon));
                    vc < vb - TIE_BAND * vb.abs()
                }
            };
            if better {
                best = Some(c);
            }
        }
        best_j.push(j_n);
        if n >= 3 {
            let gain = best_j[n - 3] - best_j[n - 1];
            if gain < 4.0 * epsilon {
                stalls += 1;
                if stalls >= 2 {
                    break;
                }
            } else {
                stalls = 0;
            }
        }
    }
    best.ok_or(SolverError::AllStartsInfeasible {
        switches: options.n_max,
    })
}

/// Exhaustive grid over the `N − 1` free durations in `[0, 3·T_min]` with
/// spacing `resolution`, followed by a compass-search refinement.
pub fn brute_force_oracle(
    n: usize,
    sign: Sign,
    epsilon: f64,
    spec: &ProblemSpec,
    resolution: f64,
) -> Result<BangBangCandidate, SolverError> {
    if !(1..=3).contains(&n) {
        return Err(SolverError::InvalidInput(format!(
            "oracle supports N <= 3, got {n}"
        )));
    }
    if !(resolution > 0.0) {
        return Err(SolverError::InvalidInput(format!(
            "resolution = {resolution}"
        )));
    }
    let x0 = fuller_point(spec)?;
    let b = spec.equibound();
    let penalty = 2.0 * epsilon * n as f64;
    let f = |free: &[f64]| evaluate(x0, sign, free, b).map_or(f64::INFINITY, |(c, _)| c + penalty);
    let upper = 3.0 * upsilon(x0);
    let steps = (upper / resolution).ceil() as usize;
    let free = n - 1;
    let mut best = (vec![0.0; free], f(&vec![0.0; free]));
    let total = (steps + 1).pow(free as u32);
    let mut point = vec![0.0; free];
    for idx in 0..total {
        let mut rem = idx;
        for p in point.iter_mut() {
            *p = (rem % (steps + 1)) as f64 * resolution;
            rem /= steps + 1;
        }
        let v = f(&point);
        if v < best.1 {
            best = (point.clone(), v);
        }
    }
    if !best.1.is_finite() {
        return Err(SolverError::AllStartsInfeasible { switches: n });
    }
    let (x, _) = compass_search(&f, best.0, best.1, resolution);
    assemble(x0, sign, x, spec)
}

fn compass_search(
    f: &impl Fn(&[f64]) -> f64,
    mut x: Vec<f64>,
    mut fx: f64,
    mut step: f64,
) -> (Vec<f64>, f64) {
    let mut iters = 0;
    while step > 1e-15 && iters < 200_000 {
        iters += 1;
        let mut moved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut p = x.clone();
                p[i] += dir * step;
                let v = f(&p);
                if v < fx {
                    x = p;
                    fx = v;
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// One point of the regularization path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub epsilon: f64,
    pub switches: usize,
    pub lagrangian_cost: f64,
    pub tv: f64,
    pub value: f64,
    pub candidate: BangBangCandidate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath {
    /// In the order of the input grid (descending ε).
    pub records: Vec<PathRecord>,
}

impl SolutionPath {
    /// Largest amount by which `V` falls below a chord of its neighbours.
    pub fn concavity_defect(&self) -> f64 {
        self.records
            .windows(3)
            .map(|w| {
                let (a, m, c) = (&w[0], &w[1], &w[2]);
                let chord = a.value
                    + (c.value - a.value) * (m.epsilon - a.epsilon) / (c.epsilon - a.epsilon);
                chord - m.value
            })
            .fold(0.0, f64::max)
    }

    /// `V` is nondecreasing in ε; records run from large to small ε.
    pub fn value_nondecreasing(&self) -> bool {
        self.records.windows(2).all(|w| w[1].value <= w[0].value)
    }

    pub fn tv_nonincreasing(&self) -> bool {
        self.records.windows(2).all(|w| w[1].tv >= w[0].tv)
    }

    pub fn cost_nondecreasing(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].lagrangian_cost <= w[0].lagrangian_cost)
    }
}

/// Solves along a descending ε grid, sharing the per-`(N, sign)` optima.
pub fn value_path(epsilons: &[f64], spec: &ProblemSpec) -> Result<SolutionPath, SolverError> {
    value_path_with(epsilons, spec, &SolverOptions::default())
}

pub fn value_path_with(
    epsilons: &[f64],
    spec: &ProblemSpec,
    options: &SolverOptions,
) -> Result<SolutionPath, SolverError> {
    if epsilons.is_empty() {
        return Err(SolverError::InvalidInput("empty epsilon grid".into()));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(SolverError::InvalidInput(
            "epsilon grid must be strictly descending".into(),
        ));
    }
    let cache = CandidateCache::new();
    let records = epsilons
        .iter()
        .map(|&eps| {
            let c = solve_cached(eps, spec, options, &cache)?;
            Ok(PathRecord {
                epsilon: eps,
                switches: c.switches(),
                lagrangian_cost: c.lagrangian_cost,
                tv: c.tv(),
                value: c.regularized_cost(eps),
                candidate: c,
            })
        })
        .collect::<Result<Vec<_>, SolverError>>()?;
    Ok(SolutionPath { records })
}
