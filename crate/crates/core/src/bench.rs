//! Deterministic benchmark runners.
//!
//! Each scenario hands replicate `i` its own random stream, obtained as
//! stream `i` of a ChaCha8 generator seeded with the master seed. Replicates
//! run in parallel, but every draw happens on the replicate's stream and the
//! results are collected in replicate order, so a run is reproduced
//! bit-for-bit by the same seed and settings regardless of thread count.
//!
//! All wall-clock fields stay `0.0` unless a run is explicitly timed; that
//! keeps serialized reports byte-identical across machines and repetitions.

use std::time::Instant;

use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{QuadrotorParams, StateFrame, StateQuad};
use crate::ilqr::cost::{FlipCost, FrameCost};
use crate::ilqr::models::{FrameModel, OrientedState, QuadIlqrState, QuadModel, RotationParam};
use crate::ilqr::{solve_ilqr, ControlBounds, IlqrError, IlqrOptions};
use crate::representations::sample_uniform_rotation;
use crate::trace::ConvergenceTrace;
use crate::wahba::{
    gauss_newton_solve, generate_instance_with_rng, Parameterization, WahbaError,
    DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE,
};

/// Point-cloud alignment benchmark: random instances solved by Gauss-Newton
/// under one parameterization. Trace values are geodesic errors of each
/// iterate against the closed-form SVD optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WahbaScenario {
    pub replicates: usize,
    pub seed: u64,
    pub n_points: usize,
    pub noise_sigma: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for WahbaScenario {
    fn default() -> Self {
        WahbaScenario {
            replicates: 200,
            seed: 42,
            n_points: 100,
            noise_sigma: 0.0,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOLERANCE,
        }
    }
}

/// Rotating-frame reorientation task: per replicate a uniform random start
/// and goal attitude, zero initial body rate, and Gaussian warm-start
/// torques. Trace values are total trajectory costs per solver iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameScenario {
    pub replicates: usize,
    pub seed: u64,
    pub dt: f64,
    pub horizon: usize,
    pub u_init_sigma: f64,
    pub max_iters: usize,
}

impl Default for FrameScenario {
    fn default() -> Self {
        FrameScenario {
            replicates: 200,
            seed: 42,
            dt: 0.02,
            horizon: 200,
            u_init_sigma: 0.1,
            max_iters: 100,
        }
    }
}

/// Quadrotor flip task: every replicate starts at rest in the origin and
/// must track a full roll revolution. Warm-start controls are hover thrust
/// plus Gaussian noise, with a small constant roll-torque offset so the
/// initial rollout already leans toward one flip direction. Thrust is boxed
/// to `[0, thrust_max_factor * hover]`; the torque rows are unbounded so
/// differences between attitude charts reach the rollouts unclipped instead
/// of being absorbed by a saturating box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadScenario {
    pub replicates: usize,
    pub seed: u64,
    pub dt: f64,
    pub horizon: usize,
    pub u_init_sigma: f64,
    pub roll_torque_bias: f64,
    pub thrust_max_factor: f64,
    pub max_iters: usize,
}

impl Default for QuadScenario {
    fn default() -> Self {
        QuadScenario {
            replicates: 20,
            seed: 7,
            dt: 0.01,
            horizon: 200,
            u_init_sigma: 0.05,
            roll_torque_bias: 0.03,
            thrust_max_factor: 4.0,
            max_iters: 300,
        }
    }
}

/// Quartile curves across replicates, aligned by iteration index: entry `k`
/// aggregates every replicate's value after `k` iterations, holding the last
/// recorded value once a replicate has terminated. By construction
/// `p25[k] <= median[k] <= p75[k]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PercentileCurves {
    pub p25: Vec<f64>,
    pub median: Vec<f64>,
    pub p75: Vec<f64>,
}

/// Everything one (scenario, representation) benchmark run produced.
///
/// `traces` holds the raw per-replicate convergence histories in replicate
/// order; it is skipped when the report is serialized because the raw
/// per-iteration values are exported separately (one CSV row per replicate
/// and iteration), leaving the serialized report as the aggregate summary.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub scenario: String,
    pub representation: String,
    pub seed: u64,
    pub replicates: usize,
    pub max_iters: usize,
    /// Replicates whose solver reported convergence (as opposed to running
    /// out of iterations).
    pub converged: usize,
    /// Scenario settings as printable key/value pairs.
    pub params: Vec<(String, String)>,
    #[serde(skip_serializing)]
    pub traces: Vec<ConvergenceTrace>,
    pub percentiles: PercentileCurves,
    /// Final objective (or error) per replicate, in replicate order.
    pub final_values: Vec<f64>,
    /// Per-replicate wall time; all zeros unless the run was timed.
    pub replicate_wall_times_s: Vec<f64>,
    /// Total wall time of the run; zero unless the run was timed.
    pub total_wall_time_s: f64,
}

/// Linear-interpolation quantile of an ascending-sorted, non-empty slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&q), "quantile level {q} outside [0, 1]");
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

/// Interpolated median of an unsorted set of values.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, 0.5)
}

/// Aggregates traces into quartile curves over iterations `0..=max_iters`.
/// Replicates that terminated early contribute their final value to every
/// later iteration, so converged runs hold their converged value.
pub fn percentile_curves(traces: &[ConvergenceTrace], max_iters: usize) -> PercentileCurves {
    assert!(!traces.is_empty(), "no traces to aggregate");
    let mut curves = PercentileCurves {
        p25: Vec::with_capacity(max_iters + 1),
        median: Vec::with_capacity(max_iters + 1),
        p75: Vec::with_capacity(max_iters + 1),
    };
    let mut col = vec![0.0; traces.len()];
    for k in 0..=max_iters {
        for (slot, t) in col.iter_mut().zip(traces) {
            *slot = t.value_at_or_last(k).expect("every trace has at least one record");
        }
        col.sort_by(|a, b| a.total_cmp(b));
        curves.p25.push(quantile_sorted(&col, 0.25));
        curves.median.push(quantile_sorted(&col, 0.5));
        curves.p75.push(quantile_sorted(&col, 0.75));
    }
    curves
}

/// Maps replicate indices to `(trace, final_value)` in parallel and returns
/// the columns in replicate order. Wall times are measured per replicate
/// only when `timed` is set.
fn run_replicates<E, F>(
    replicates: usize,
    timed: bool,
    run_one: F,
) -> Result<(Vec<ConvergenceTrace>, Vec<f64>, Vec<f64>), E>
where
    E: Send,
    F: Fn(u64) -> Result<(ConvergenceTrace, f64), E> + Sync,
{
    assert!(replicates >= 1, "need at least one replicate");
    let rows: Result<Vec<_>, E> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let start = Instant::now();
            let (trace, final_value) = run_one(rep)?;
            let wall = if timed { start.elapsed().as_secs_f64() } else { 0.0 };
            Ok((trace, final_value, wall))
        })
        .collect();
    let mut traces = Vec::with_capacity(replicates);
    let mut finals = Vec::with_capacity(replicates);
    let mut walls = Vec::with_capacity(replicates);
    for (trace, final_value, wall) in rows? {
        traces.push(trace);
        finals.push(final_value);
        walls.push(wall);
    }
    Ok((traces, finals, walls))
}

fn finish_report(
    scenario: &str,
    representation: &str,
    seed: u64,
    max_iters: usize,
    params: Vec<(String, String)>,
    traces: Vec<ConvergenceTrace>,
    final_values: Vec<f64>,
    replicate_wall_times_s: Vec<f64>,
    total_wall_time_s: f64,
) -> BenchmarkReport {
    let percentiles = percentile_curves(&traces, max_iters);
    let converged = traces.iter().filter(|t| t.converged).count();
    BenchmarkReport {
        scenario: scenario.to_string(),
        representation: representation.to_string(),
        seed,
        replicates: traces.len(),
        max_iters,
        converged,
        params,
        traces,
        percentiles,
        final_values,
        replicate_wall_times_s,
        total_wall_time_s,
    }
}

/// Runs the alignment benchmark under one parameterization.
///
/// Replicate `i` generates its instance from stream `i` of the master seed;
/// all parameterizations therefore see the same instances. Final values are
/// the geodesic errors of the last Gauss-Newton iterate.
pub fn run_wahba(
    scn: &WahbaScenario,
    par: Parameterization,
    timed: bool,
) -> Result<BenchmarkReport, WahbaError> {
    let t0 = Instant::now();
    let (traces, finals, walls) = run_replicates(scn.replicates, timed, |rep| {
        let mut rng = ChaCha8Rng::seed_from_u64(scn.seed);
        rng.set_stream(rep);
        let inst = generate_instance_with_rng(scn.n_points, &mut rng, scn.noise_sigma);
        let (_, trace) = gauss_newton_solve(par, &inst, scn.max_iters, scn.tol)?;
        let fin = trace.final_value().expect("solver records the initial error");
        Ok((trace, fin))
    })?;
    let total = if timed { t0.elapsed().as_secs_f64() } else { 0.0 };
    let params = vec![
        ("n_points".to_string(), scn.n_points.to_string()),
        ("noise_sigma".to_string(), scn.noise_sigma.to_string()),
        ("tol".to_string(), scn.tol.to_string()),
    ];
    Ok(finish_report(
        "wahba",
        par.name(),
        scn.seed,
        scn.max_iters,
        params,
        traces,
        finals,
        walls,
        total,
    ))
}

/// Runs the rotating-frame task under one attitude chart.
///
/// Replicate `i` draws, in order, the start rotation, the goal rotation, and
/// `horizon` warm-start torque 3-vectors from stream `i` of the master seed.
/// Controls are unbounded; the solver restarts reuse the replicate index as
/// their seed. Final values are total trajectory costs.
pub fn run_frame_ilqr(
    scn: &FrameScenario,
    param: RotationParam,
    timed: bool,
) -> Result<BenchmarkReport, IlqrError> {
    let t0 = Instant::now();
    let model = FrameModel::new(param, scn.dt);
    let bounds = ControlBounds::unbounded(3);
    let (traces, finals, walls) = run_replicates(scn.replicates, timed, |rep| {
        let mut rng = ChaCha8Rng::seed_from_u64(scn.seed);
        rng.set_stream(rep);
        let start = sample_uniform_rotation(&mut rng);
        let goal = sample_uniform_rotation(&mut rng);
        let u_init: Vec<DVector<f64>> = (0..scn.horizon)
            .map(|_| {
                DVector::from_fn(3, |_, _| {
                    scn.u_init_sigma * rng.sample::<f64, _>(StandardNormal)
                })
            })
            .collect();
        let cost = FrameCost::with_default_weights(param, goal);
        let x0 = OrientedState::new(StateFrame::new(start, Vector3::zeros()));
        let opts =
            IlqrOptions { max_iters: scn.max_iters, restart_seed: rep, ..Default::default() };
        let (traj, trace) = solve_ilqr(&model, &cost, &x0, &u_init, &bounds, &opts)?;
        Ok((trace, traj.cost))
    })?;
    let total = if timed { t0.elapsed().as_secs_f64() } else { 0.0 };
    let params = vec![
        ("dt".to_string(), scn.dt.to_string()),
        ("horizon".to_string(), scn.horizon.to_string()),
        ("u_init_sigma".to_string(), scn.u_init_sigma.to_string()),
    ];
    Ok(finish_report(
        "frame-ilqr",
        param.name(),
        scn.seed,
        scn.max_iters,
        params,
        traces,
        finals,
        walls,
        total,
    ))
}

/// Runs the quadrotor flip task under one attitude chart.
///
/// Replicate `i` draws `horizon` warm-start controls from stream `i` of the
/// master seed, per step in the order thrust noise then the three torque
/// noises, after which the roll-torque offset is added. The start state is
/// shared by all replicates. Final values are total trajectory costs.
pub fn run_quad_ilqr(
    scn: &QuadScenario,
    param: RotationParam,
    timed: bool,
) -> Result<BenchmarkReport, IlqrError> {
    let t0 = Instant::now();
    let quad_params = QuadrotorParams { dt: scn.dt, ..Default::default() };
    let hover = quad_params.hover_thrust();
    let lower = DVector::from_column_slice(&[
        0.0,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    ]);
    let upper = DVector::from_column_slice(&[
        scn.thrust_max_factor * hover,
        f64::INFINITY,
        f64::INFINITY,
        f64::INFINITY,
    ]);
    let bounds = ControlBounds::new(lower, upper);
    let model = QuadModel::new(param, quad_params.clone());
    let (traces, finals, walls) = run_replicates(scn.replicates, timed, |rep| {
        let mut rng = ChaCha8Rng::seed_from_u64(scn.seed);
        rng.set_stream(rep);
        let u_init: Vec<DVector<f64>> = (0..scn.horizon)
            .map(|_| {
                let mut u = DVector::zeros(4);
                u[0] = hover + scn.u_init_sigma * rng.sample::<f64, _>(StandardNormal);
                for i in 1..4 {
                    u[i] = scn.u_init_sigma * rng.sample::<f64, _>(StandardNormal);
                }
                u[1] += scn.roll_torque_bias;
                u
            })
            .collect();
        let cost = FlipCost::with_default_weights(param, scn.horizon, quad_params.dt);
        let x0 = QuadIlqrState::new(StateQuad::rest(Vector3::zeros()));
        let opts =
            IlqrOptions { max_iters: scn.max_iters, restart_seed: rep, ..Default::default() };
        let (traj, trace) = solve_ilqr(&model, &cost, &x0, &u_init, &bounds, &opts)?;
        Ok((trace, traj.cost))
    })?;
    let total = if timed { t0.elapsed().as_secs_f64() } else { 0.0 };
    let params = vec![
        ("dt".to_string(), scn.dt.to_string()),
        ("horizon".to_string(), scn.horizon.to_string()),
        ("u_init_sigma".to_string(), scn.u_init_sigma.to_string()),
        ("roll_torque_bias".to_string(), scn.roll_torque_bias.to_string()),
        ("thrust_max_factor".to_string(), scn.thrust_max_factor.to_string()),
    ];
    Ok(finish_report(
        "quad-ilqr",
        param.name(),
        scn.seed,
        scn.max_iters,
        params,
        traces,
        finals,
        walls,
        total,
    ))
}
