//! The five experiment families.

use std::sync::Arc;
use std::time::Instant;

use bvlab_core::control::{simulate, sup_deviation};
use bvlab_core::fuller::{synthesize_chattering, ChatteringSolution, FullerSynthesis};
use bvlab_core::hybrid::{
    detect_zeno, execute, hybrid_cost, zeno_rate_sweep, HybridCost, HybridSystem, HybridTrajectory,
    ModeLagrangian,
};
use bvlab_core::rates::fit_points;
use bvlab_core::solver::{solve_cached, CandidateCache, PathRecord, SolutionPath, SolverOptions};
use bvlab_core::truncation::{
    corollary_check, flow_speed_bound, holder_ratio, rate_sweep, upsilon,
};
use bvlab_core::{lagrangian_cost, HybridError, RateRecord};
use log::info;
use serde_json::{json, Value};

use crate::config::{Experiment, ExperimentConfig, HybridModel};
use crate::LabError;

/// Records for the CSV plus the manifest document.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<RateRecord>,
    pub manifest: Value,
}

/// Runs a resolved config.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput, LabError> {
    info!("running {}", config.experiment.id());
    let (records, results) = match config.experiment {
        Experiment::FullerSynthesize => fuller_synthesize(config)?,
        Experiment::TvPath => tv_path(config)?,
        Experiment::TruncationRate => truncation_rate(config)?,
        Experiment::ZenoRate => zeno_rate(config)?,
        Experiment::CorollaryCheck => corollary(config)?,
    };
    let manifest = json!({
        "experiment": config.experiment.id(),
        "version": env!("CARGO_PKG_VERSION"),
        "core_version": bvlab_core::VERSION,
        "seed": config.seed,
        "config": config,
        "results": results,
    });
    Ok(RunOutput { records, manifest })
}

struct Clock {
    enabled: bool,
    start: Instant,
}

impl Clock {
    fn start(enabled: bool) -> Self {
        Self {
            enabled,
            start: Instant::now(),
        }
    }

    /// Milliseconds since start split over `rows`; zero unless timing is on.
    fn per_row(&self, rows: usize) -> f64 {
        if self.enabled {
            self.start.elapsed().as_secs_f64() * 1e3 / rows.max(1) as f64
        } else {
            0.0
        }
    }
}

fn synthesize(config: &ExperimentConfig) -> Result<ChatteringSolution, LabError> {
    let synth = FullerSynthesis::new(config.tol)?;
    Ok(synthesize_chattering(config.x0, &synth)?)
}

fn fuller_synthesize(config: &ExperimentConfig) -> Result<(Vec<RateRecord>, Value), LabError> {
    let clock = Clock::start(config.timing);
    let synth = FullerSynthesis::new(config.tol)?;
    let sol = synthesize_chattering(config.x0, &synth)?;
    let wall = clock.per_row(sol.switch_times.len());
    let records = sol
        .switch_times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let x = sol.state_at(t);
            RateRecord {
                param: t,
                cost_gap: bvlab_core::control::lagrangian_cost_between(
                    &sol.trajectory,
                    &sol.spec,
                    t,
                    sol.horizon,
                ),
                sup_dev: x[0].abs().max(x[1].abs()),
                l1_dev: sol.horizon - t,
                tv: 2.0 * (k + 1) as f64,
                wall_ms: wall,
            }
        })
        .collect();
    let ratios = sol.interval_ratios();
    let results = json!({
        "zeta": synth.zeta,
        "rho": synth.rho,
        "t_star": sol.horizon,
        "j_star": sol.cost,
        "predicted_t_star": sol.predicted_horizon,
        "tail_start": sol.tail_start,
        "tail_cost": sol.tail_cost,
        "truncation_tol": synth.truncation_tol,
        "switches": sol.switch_times.len(),
        "interval_ratios": ratios,
        "terminal_residual": sol.trajectory.final_state().iter().map(|v| v.abs()).fold(0.0, f64::max),
    });
    Ok((records, results))
}

fn solve_path(config: &ExperimentConfig, wall: &mut Vec<f64>) -> Result<SolutionPath, LabError> {
    let spec = bvlab_core::ProblemSpec::fuller(config.x0);
    let options = SolverOptions {
        seed: config.seed,
        ..SolverOptions::default()
    };
    let cache = CandidateCache::new();
    let mut records = Vec::new();
    for &eps in config.eps() {
        let clock = Clock::start(config.timing);
        let c = solve_cached(eps, &spec, &options, &cache)?;
        wall.push(clock.per_row(1));
        info!(
            "eps = {eps:e}: N = {}, J_L = {:.15}",
            c.switches(),
            c.lagrangian_cost
        );
        records.push(PathRecord {
            epsilon: eps,
            switches: c.switches(),
            lagrangian_cost: c.lagrangian_cost,
            tv: c.tv(),
            value: c.regularized_cost(eps),
            candidate: c,
        });
    }
    Ok(SolutionPath { records })
}

fn path_records(
    sol: &ChatteringSolution,
    path: &SolutionPath,
    wall: &[f64],
) -> Result<Vec<RateRecord>, LabError> {
    path.records
        .iter()
        .zip(wall)
        .map(|(r, &w)| {
            let control = r.candidate.control();
            let traj = simulate(&sol.spec, &control).map_err(bvlab_core::SolverError::from)?;
            Ok(RateRecord {
                param: r.epsilon,
                cost_gap: r.lagrangian_cost - sol.cost,
                sup_dev: sup_deviation(&traj, &sol.trajectory),
                l1_dev: control.l1_distance(&sol.control),
                tv: r.tv,
                wall_ms: w,
            })
        })
        .collect()
}

fn path_summary(path: &SolutionPath, j_star: f64) -> Value {
    let gaps: Vec<(f64, f64)> = path
        .records
        .iter()
        .map(|r| (r.epsilon, r.lagrangian_cost - j_star))
        .collect();
    let fit = fit_points(&gaps).ok();
    json!({
        "j_star": j_star,
        "path": path.records.iter().map(|r| json!({
            "epsilon": r.epsilon,
            "switches": r.switches,
            "lagrangian_cost": r.lagrangian_cost,
            "tv": r.tv,
            "value": r.value,
            "initial_sign": r.candidate.initial_sign.value(),
            "terminal_residual": r.candidate.terminal_residual,
        })).collect::<Vec<_>>(),
        "value_nondecreasing": path.value_nondecreasing(),
        "tv_nonincreasing": path.tv_nonincreasing(),
        "cost_nondecreasing": path.cost_nondecreasing(),
        "concavity_defect": path.concavity_defect(),
        "gap_fit": fit,
    })
}

fn tv_path(config: &ExperimentConfig) -> Result<(Vec<RateRecord>, Value), LabError> {
    let sol = synthesize(config)?;
    let mut wall = Vec::new();
    let path = solve_path(config, &mut wall)?;
    let records = path_records(&sol, &path, &wall)?;
    Ok((records, path_summary(&path, sol.cost)))
}

fn truncation_rate(config: &ExperimentConfig) -> Result<(Vec<RateRecord>, Value), LabError> {
    let sol = synthesize(config)?;
    let clock = Clock::start(config.timing);
    let sweep = rate_sweep(&sol, config.eta())?;
    let wall = clock.per_row(sweep.results.len());
    let records: Vec<RateRecord> = sweep
        .records()
        .into_iter()
        .map(|r| RateRecord { wall_ms: wall, ..r })
        .collect();
    let k = flow_speed_bound(&sol);
    let rows: Vec<Value> = sweep
        .results
        .iter()
        .map(|r| {
            json!({
                "eta": r.eta,
                "t_eta": r.horizon,
                "tau_eta": r.tau_eta,
                "tv_head": r.tv_head,
                "tv_budget_ok": r.respects_tv_budget(),
                "terminal_residual": r.terminal_residual,
                "cut_state_within_k_eta": r.cut_state[0].abs().max(r.cut_state[1].abs()) <= k * r.eta,
                "tau_within_two_upsilon": r.tau_eta <= 2.0 * upsilon(r.cut_state) + 1e-15,
                "gap_upper_bound": r.gap_upper_bound(),
            })
        })
        .collect();
    let results = json!({
        "t_star": sol.horizon,
        "j_star": sol.cost,
        "fit": sweep.fit,
        "fitted_points": sweep.fitted_points,
        "horizon_monotone": sweep.horizon_monotone,
        "l1_monotone": sweep.l1_monotone,
        "sup_monotone": sweep.sup_monotone,
        "speed_bound": k,
        "holder_ratio": holder_ratio(10_000, config.seed),
        "points": rows,
    });
    Ok((records, results))
}

fn hybrid_setup(config: &ExperimentConfig) -> (HybridSystem, [f64; 2], HybridCost) {
    let p = &config.params;
    match config.model {
        HybridModel::WaterTank => {
            let sys = HybridSystem::water_tank(p.inflow, p.outflow[0], p.outflow[1], p.thresholds);
            let costs = p.mode_costs.clone().unwrap_or_else(|| vec![1.0, 2.0]);
            (
                sys,
                p.initial_state.unwrap_or([0.5, 0.5]),
                HybridCost::per_mode_constant(&costs),
            )
        }
        HybridModel::BouncingBall => {
            let sys = HybridSystem::bouncing_ball(p.gravity, p.restitution);
            let cost = match &p.mode_costs {
                Some(c) => HybridCost::per_mode_constant(c),
                None => HybridCost {
                    lagrangians: vec![
                        Arc::new(|_t: f64, x: &[f64]| 1.0 + x[0] * x[0]) as ModeLagrangian
                    ],
                },
            };
            (sys, p.initial_state.unwrap_or([1.0, 0.0]), cost)
        }
    }
}

fn zeno_rate(config: &ExperimentConfig) -> Result<(Vec<RateRecord>, Value), LabError> {
    let p = &config.params;
    let (sys, x0, cost) = hybrid_setup(config);
    if cost.lagrangians.len() != sys.modes.len() {
        return Err(LabError::Config(format!(
            "mode_costs needs {} entries for {}",
            sys.modes.len(),
            sys.name
        )));
    }
    let clock = Clock::start(config.timing);
    let mut traj: HybridTrajectory =
        match execute(&sys, p.initial_mode, &x0, f64::MAX, p.max_events, p.step) {
            Err(e @ HybridError::EventOverflow { .. }) => {
                e.into_trajectory().expect("overflow carries the execution")
            }
            Err(e) => return Err(e.into()),
            Ok(_) => return Err(HybridError::NotZeno.into()),
        };
    let zeno = detect_zeno(&traj, p.window)?;
    traj.zeno = Some(zeno);
    if !zeno.is_zeno {
        return Err(HybridError::NotZeno.into());
    }
    if let Some(&n) = config.n().iter().find(|&&n| n >= traj.events.len()) {
        return Err(LabError::Config(format!(
            "n = {n} needs more than the {} recorded events",
            traj.events.len()
        )));
    }
    let sweep = zeno_rate_sweep(&sys, &traj, config.n(), &cost, p.step)?;
    let total = hybrid_cost(&sys, &traj, &cost, p.step)?;
    let wall = clock.per_row(sweep.records.len());
    let records = sweep
        .records
        .iter()
        .map(|r| RateRecord {
            wall_ms: wall,
            ..*r
        })
        .collect();
    let results = json!({
        "model": sys.name,
        "events": traj.events.len(),
        "tau_inf": zeno.tau_inf,
        "ratio": zeno.ratio,
        "fit_residual": zeno.residual,
        "cost": total.value,
        "tail_cost": total.tail,
        "tail_bound": total.tail_bound,
        "sup_fit": sweep.sup_fit,
        "gap_fit": sweep.gap_fit,
        "c_tilde": sweep.c_tilde,
        "c": sweep.c,
        "gap_bound_holds": sweep.bound_holds,
    });
    Ok((records, results))
}

fn corollary(config: &ExperimentConfig) -> Result<(Vec<RateRecord>, Value), LabError> {
    let sol = synthesize(config)?;
    let mut wall = Vec::new();
    let path = solve_path(config, &mut wall)?;
    let records = path_records(&sol, &path, &wall)?;
    let report = corollary_check(&sol, &path)?;
    let check = lagrangian_cost(&sol.trajectory, &sol.spec);
    let results = json!({
        "j_star": check,
        "m_hat": report.m_hat,
        "rate_constant": report.rate_constant,
        "holds": report.holds(),
        "points": report.points.iter().map(|p| json!({
            "epsilon": p.epsilon,
            "gap": p.gap,
            "mu": p.mu,
            "competitor_gap": p.competitor_gap,
            "bound": p.bound,
            "holds": p.holds,
        })).collect::<Vec<_>>(),
    });
    Ok((records, results))
}
