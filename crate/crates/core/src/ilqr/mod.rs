//! Manifold-aware iterative LQR.
//!
//! The solver works on deviation coordinates `Δx = x ⊖ x̄` defined by the
//! model, so the same backward/forward machinery serves Euclidean systems
//! and every rotation representation: only [`TrajectoryModel::state_diff`],
//! the linearization, and the cost expansions change. The backward pass is a
//! Riccati-style recursion with control-space regularization and box
//! constraints handled by [`boxqp`]; the forward pass line-searches the
//! feedforward with an expected-improvement acceptance rule and re-seeds the
//! controls with small noise when the search stalls at maximum
//! regularization.

pub mod boxqp;
pub mod cost;
pub mod models;

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::Linearization;
use crate::trace::ConvergenceTrace;

use boxqp::boxqp;

/// Discrete dynamics plus the deviation geometry the optimizer works in.
pub trait TrajectoryModel {
    type State: Clone;

    /// Dimension of the deviation vector `Δx`.
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn step(&self, x: &Self::State, u: &DVector<f64>) -> Self::State;
    /// Jacobians of `step` in deviation coordinates.
    fn linearize(&self, x: &Self::State, u: &DVector<f64>) -> Linearization;
    /// `x ⊖ base`, length [`TrajectoryModel::state_dim`].
    fn state_diff(&self, x: &Self::State, base: &Self::State) -> DVector<f64>;
    fn is_finite(&self, x: &Self::State) -> bool;
}

/// Stage cost expansion in deviation coordinates around the expansion point.
#[derive(Debug, Clone)]
pub struct StageExpansion {
    pub lx: DVector<f64>,
    pub lu: DVector<f64>,
    pub lxx: DMatrix<f64>,
    pub luu: DMatrix<f64>,
    pub lux: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct TerminalExpansion {
    pub lx: DVector<f64>,
    pub lxx: DMatrix<f64>,
}

/// Additive trajectory cost `ℓ_f(x_N) + Σ_k ℓ_k(x_k, u_k)` with expansions
/// in the model's deviation coordinates.
pub trait CostFunction<S> {
    fn stage(&self, k: usize, x: &S, u: &DVector<f64>) -> f64;
    fn terminal(&self, x: &S) -> f64;
    fn stage_expansion(&self, k: usize, x: &S, u: &DVector<f64>) -> StageExpansion;
    fn terminal_expansion(&self, x: &S) -> TerminalExpansion;
}

/// Elementwise control limits applied during every rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl ControlBounds {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        for i in 0..lower.len() {
            assert!(lower[i] <= upper[i], "bound {i} inverted");
        }
        ControlBounds { lower, upper }
    }

    pub fn unbounded(m: usize) -> Self {
        ControlBounds {
            lower: DVector::from_element(m, f64::NEG_INFINITY),
            upper: DVector::from_element(m, f64::INFINITY),
        }
    }

    pub fn clamp(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(u.len(), |i, _| u[i].clamp(self.lower[i], self.upper[i]))
    }
}

/// Time-varying affine policy `u_k = ū_k - α·k_k - K_k·Δx_k`.
#[derive(Debug, Clone)]
pub struct FeedbackPolicy {
    pub feedforward: Vec<DVector<f64>>,
    pub gains: Vec<DMatrix<f64>>,
}

/// Nominal trajectory with its total cost.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub states: Vec<S>,
    pub controls: Vec<DVector<f64>>,
    pub cost: f64,
}

impl<S> Trajectory<S> {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IlqrError {
    /// The initial rollout left the finite domain; there is no trajectory to
    /// improve.
    DivergedInitialRollout,
}

impl fmt::Display for IlqrError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IlqrError::DivergedInitialRollout => {
                write!(f, "initial rollout produced a non-finite state")
            }
        }
    }
}

impl std::error::Error for IlqrError {}

#[derive(Debug, Clone, PartialEq)]
pub struct IlqrOptions {
    pub max_iters: usize,
    /// Converged when an accepted step improves the cost by less than this.
    pub tol: f64,
    /// Converged when the expected improvement of a full step falls below
    /// this (stationarity).
    pub grad_tol: f64,
    pub mu_init: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    /// Gaussian re-seeds of the control sequence after the line search
    /// stalls at maximum regularization.
    pub restarts: usize,
    pub restart_sigma: f64,
    pub restart_seed: u64,
    pub line_search_c1: f64,
}

impl Default for IlqrOptions {
    fn default() -> Self {
        IlqrOptions {
            max_iters: 100,
            tol: 1e-7,
            grad_tol: 1e-12,
            mu_init: 1e-6,
            mu_min: 1e-9,
            mu_max: 1e9,
            restarts: 3,
            restart_sigma: 1e-3,
            restart_seed: 0,
            line_search_c1: 1e-4,
        }
    }
}

/// Rolls the controls (clamped to bounds) out from `x0` and totals the cost.
/// Returns `None` if any state goes non-finite.
pub fn rollout<M, C>(
    model: &M,
    cost: &C,
    x0: &M::State,
    controls: &[DVector<f64>],
    bounds: &ControlBounds,
) -> Option<Trajectory<M::State>>
where
    M: TrajectoryModel,
    C: CostFunction<M::State>,
{
    let mut states = Vec::with_capacity(controls.len() + 1);
    let mut clamped = Vec::with_capacity(controls.len());
    let mut total = 0.0;
    states.push(x0.clone());
    for (k, u) in controls.iter().enumerate() {
        let u = bounds.clamp(u);
        let x = states.last().unwrap();
        total += cost.stage(k, x, &u);
        let next = model.step(x, &u);
        if !model.is_finite(&next) {
            return None;
        }
        states.push(next);
        clamped.push(u);
    }
    total += cost.terminal(states.last().unwrap());
    if !total.is_finite() {
        return None;
    }
    Some(Trajectory { states, controls: clamped, cost: total })
}

/// Closed-loop rollout `u_k = ū_k - α·k_k - K_k·Δx_k` against a nominal
/// trajectory.
pub fn rollout_policy<M, C>(
    model: &M,
    cost: &C,
    nominal: &Trajectory<M::State>,
    policy: &FeedbackPolicy,
    alpha: f64,
    bounds: &ControlBounds,
) -> Option<Trajectory<M::State>>
where
    M: TrajectoryModel,
    C: CostFunction<M::State>,
{
    let mut states = Vec::with_capacity(nominal.states.len());
    let mut controls = Vec::with_capacity(nominal.horizon());
    let mut total = 0.0;
    states.push(nominal.states[0].clone());
    for k in 0..nominal.horizon() {
        let x = states.last().unwrap();
        let dx = model.state_diff(x, &nominal.states[k]);
        let u = bounds.clamp(
            &(&nominal.controls[k] - alpha * &policy.feedforward[k] - &policy.gains[k] * dx),
        );
        total += cost.stage(k, x, &u);
        let next = model.step(x, &u);
        if !model.is_finite(&next) {
            return None;
        }
        states.push(next);
        controls.push(u);
    }
    total += cost.terminal(states.last().unwrap());
    if !total.is_finite() {
        return None;
    }
    Some(Trajectory { states, controls, cost: total })
}

/// Output of one backward pass: the policy plus the linear and quadratic
/// expected-improvement coefficients (`ΔJ(α) ≈ α·d1 - ½α²·d2`) and per-step
/// `Q_u` for diagnostics.
#[derive(Debug, Clone)]
pub struct BackwardPass {
    pub policy: FeedbackPolicy,
    pub d1: f64,
    pub d2: f64,
    pub q_u: Vec<DVector<f64>>,
}

/// The value recursion failed to stay positive definite even with the
/// regularization `mu`; the caller should raise `mu` and retry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonPositiveDefinite;

/// Riccati-style backward pass on the current nominal trajectory.
///
/// Per step: `Q_x = ℓ_x + Aᵀp'`, `Q_u = ℓ_u + Bᵀp'`, `Q_xx = ℓ_xx + AᵀP'A`,
/// `Q_uu = ℓ_uu + BᵀP'B`, `Q_ux = ℓ_ux + BᵀP'A`. Gains solve the box QP on
/// `Q_uu + μI`; clamped coordinates get zero feedback rows. The value
/// expansion uses the standard form
/// `P = Q_xx + KᵀQ_uuK - Q_xuK - KᵀQ_ux`,
/// `p = Q_x + KᵀQ_uu·k - KᵀQ_u - Q_xu·k`, symmetrized each step.
pub fn backward_pass<M, C>(
    model: &M,
    cost: &C,
    nominal: &Trajectory<M::State>,
    bounds: &ControlBounds,
    mu: f64,
) -> Result<BackwardPass, NonPositiveDefinite>
where
    M: TrajectoryModel,
    C: CostFunction<M::State>,
{
    let n = model.state_dim();
    let m = model.control_dim();
    let horizon = nominal.horizon();
    let terminal = cost.terminal_expansion(nominal.states.last().unwrap());
    let mut p_mat = terminal.lxx;
    let mut p_vec = terminal.lx;

    let mut feedforward = vec![DVector::zeros(m); horizon];
    let mut gains = vec![DMatrix::zeros(m, n); horizon];
    let mut q_u_all = vec![DVector::zeros(m); horizon];
    let (mut d1, mut d2) = (0.0, 0.0);

    for k in (0..horizon).rev() {
        let x = &nominal.states[k];
        let u = &nominal.controls[k];
        let lin = model.linearize(x, u);
        let exp = cost.stage_expansion(k, x, u);

        let q_x = &exp.lx + lin.a.transpose() * &p_vec;
        let q_u = &exp.lu + lin.b.transpose() * &p_vec;
        let q_xx = &exp.lxx + lin.a.transpose() * &p_mat * &lin.a;
        let q_uu = &exp.luu + lin.b.transpose() * &p_mat * &lin.b;
        let q_ux = &exp.lux + lin.b.transpose() * &p_mat * &lin.a;

        let q_uu_reg = &q_uu + DMatrix::identity(m, m) * mu;
        if q_uu_reg.clone().cholesky().is_none() {
            return Err(NonPositiveDefinite);
        }

        // δu bounds are the control bounds shifted by the nominal control.
        let lo = DVector::from_fn(m, |i, _| self_sub_inf(bounds.lower[i], u[i]));
        let hi = DVector::from_fn(m, |i, _| self_sub_inf(bounds.upper[i], u[i]));
        let qp = boxqp(&q_uu_reg, &q_u, &lo, &hi, &DVector::zeros(m));

        let k_ff = -qp.u;
        let mut k_gain = DMatrix::zeros(m, n);
        let free_idx: Vec<usize> = (0..m).filter(|&i| qp.free[i]).collect();
        if !free_idx.is_empty() {
            let nf = free_idx.len();
            let h_ff =
                DMatrix::from_fn(nf, nf, |a, b| q_uu_reg[(free_idx[a], free_idx[b])]);
            let rhs = DMatrix::from_fn(nf, n, |a, b| q_ux[(free_idx[a], b)]);
            let sol = h_ff
                .cholesky()
                .ok_or(NonPositiveDefinite)?
                .solve(&rhs);
            for (a, &i) in free_idx.iter().enumerate() {
                k_gain.row_mut(i).copy_from(&sol.row(a));
            }
        }

        d1 += k_ff.dot(&q_u);
        d2 += (k_ff.transpose() * &q_uu * &k_ff)[(0, 0)];

        p_vec = &q_x + k_gain.transpose() * (&q_uu * &k_ff) - k_gain.transpose() * &q_u
            - q_ux.transpose() * &k_ff;
        p_mat = &q_xx + k_gain.transpose() * &q_uu * &k_gain
            - q_ux.transpose() * &k_gain
            - k_gain.transpose() * &q_ux;
        p_mat = (&p_mat + p_mat.transpose()) * 0.5;

        feedforward[k] = k_ff;
        gains[k] = k_gain;
        q_u_all[k] = q_u;
    }

    Ok(BackwardPass {
        policy: FeedbackPolicy { feedforward, gains },
        d1,
        d2,
        q_u: q_u_all,
    })
}

/// Subtraction that keeps infinities infinite instead of producing NaN.
fn self_sub_inf(bound: f64, u: f64) -> f64 {
    if bound.is_infinite() {
        bound
    } else {
        bound - u
    }
}

/// Full iLQR loop: backward pass, expected-improvement line search over
/// `α ∈ {1, ½, …, 2⁻¹⁰}`, regularization schedule ×10 on failure and ÷2 on
/// acceptance, and Gaussian control re-seeding when the search stalls at
/// maximum regularization. Hitting `max_iters` returns the best trajectory
/// with the trace marked non-converged.
pub fn solve_ilqr<M, C>(
    model: &M,
    cost: &C,
    x0: &M::State,
    u_init: &[DVector<f64>],
    bounds: &ControlBounds,
    opts: &IlqrOptions,
) -> Result<(Trajectory<M::State>, ConvergenceTrace), IlqrError>
where
    M: TrajectoryModel,
    C: CostFunction<M::State>,
{
    let start = Instant::now();
    let mut trace = ConvergenceTrace::new();
    let mut nominal = rollout(model, cost, x0, u_init, bounds)
        .ok_or(IlqrError::DivergedInitialRollout)?;
    trace.push(0, nominal.cost, start.elapsed().as_secs_f64(), false);

    let mut mu = opts.mu_init;
    let mut restarts_used = 0;
    let mut restart_rng = ChaCha8Rng::seed_from_u64(opts.restart_seed);

    for iter in 1..=opts.max_iters {
        let mut damped = false;
        let backward = loop {
            match backward_pass(model, cost, &nominal, bounds, mu) {
                Ok(b) => break Some(b),
                Err(NonPositiveDefinite) => {
                    mu *= 10.0;
                    damped = true;
                    if mu > opts.mu_max {
                        break None;
                    }
                }
            }
        };
        let Some(backward) = backward else {
            if !try_restart(
                model, cost, bounds, opts, &mut nominal, &mut restarts_used, &mut restart_rng,
            ) {
                trace.push(iter, nominal.cost, start.elapsed().as_secs_f64(), true);
                break;
            }
            mu = opts.mu_init;
            trace.push(iter, nominal.cost, start.elapsed().as_secs_f64(), true);
            continue;
        };

        // Stationarity: a full step would improve the cost by less than the
        // gradient tolerance.
        let expected_full = backward.d1 - 0.5 * backward.d2;
        if expected_full.abs() < opts.grad_tol {
            trace.push(iter, nominal.cost, start.elapsed().as_secs_f64(), damped);
            trace.converged = true;
            break;
        }

        let mut accepted = None;
        for i in 0..=10 {
            let alpha = 0.5_f64.powi(i);
            let Some(candidate) =
                rollout_policy(model, cost, &nominal, &backward.policy, alpha, bounds)
            else {
                continue;
            };
            let actual = nominal.cost - candidate.cost;
            let expected = alpha * backward.d1 - 0.5 * alpha * alpha * backward.d2;
            let ok = if expected > 0.0 {
                actual >= opts.line_search_c1 * expected
            } else {
                actual > 0.0
            };
            if ok {
                accepted = Some(candidate);
                break;
            }
        }

        match accepted {
            Some(candidate) => {
                let improvement = nominal.cost - candidate.cost;
                nominal = candidate;
                mu = (mu / 2.0).max(opts.mu_min);
                trace.push(iter, nominal.cost, start.elapsed().as_secs_f64(), damped);
                if improvement.abs() < opts.tol {
                    trace.converged = true;
                    break;
                }
            }
            None => {
                mu *= 10.0;
                if mu > opts.mu_max {
                    if !try_restart(
                        model,
                        cost,
                        bounds,
                        opts,
                        &mut nominal,
                        &mut restarts_used,
                        &mut restart_rng,
                    ) {
                        trace.push(iter, nominal.cost, start.elapsed().as_secs_f64(), true);
                        break;
                    }
                    mu = opts.mu_init;
                }
                trace.push(iter, nominal.cost, start.elapsed().as_secs_f64(), true);
            }
        }
    }

    Ok((nominal, trace))
}

/// Re-seeds the nominal controls with Gaussian noise. Returns false once the
/// restart budget is exhausted or no perturbation yields a finite rollout.
fn try_restart<M, C>(
    model: &M,
    cost: &C,
    bounds: &ControlBounds,
    opts: &IlqrOptions,
    nominal: &mut Trajectory<M::State>,
    restarts_used: &mut usize,
    rng: &mut ChaCha8Rng,
) -> bool
where
    M: TrajectoryModel,
    C: CostFunction<M::State>,
{
    while *restarts_used < opts.restarts {
        *restarts_used += 1;
        let perturbed: Vec<DVector<f64>> = nominal
            .controls
            .iter()
            .map(|u| {
                u + DVector::from_fn(u.len(), |_, _| {
                    opts.restart_sigma * rng.sample::<f64, _>(StandardNormal)
                })
            })
            .collect();
        if let Some(t) = rollout(model, cost, &nominal.states[0], &perturbed, bounds) {
            *nominal = t;
            return true;
        }
    }
    false
}
