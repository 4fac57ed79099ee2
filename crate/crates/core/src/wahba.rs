//! Point-cloud attitude estimation: instance generation, the closed-form SVD
//! solution, and Gauss-Newton solvers over six rotation parameterizations.
//!
//! Given paired unit vectors `p_w = R p_b + noise`, the estimation problem is
//! the nonlinear least squares `min_θ Σ ‖p_w - R(θ) p_b‖²`. Every
//! parameterization shares the solver loop and differs only in how `θ` maps
//! to a rotation, how a step retracts, and what the residual Jacobian looks
//! like. Convergence traces record geodesic error against the SVD solution,
//! which is the global optimum of the same cost.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, UnitSphere};

use crate::distances::{dist_geodesic, project_so3};
use crate::representations::{
    euler_to_rotation, rotation_to_euler, sample_uniform_rotation, Axis, EulerAngles,
    EulerConvention, Quaternion,
};
use crate::so3::{exp_so3, hat, log_so3, oplus_right, right_jacobian, Rotation};
use crate::trace::ConvergenceTrace;

pub const DEFAULT_MAX_ITERS: usize = 50;
pub const DEFAULT_TOLERANCE: f64 = 1e-13;
/// Levenberg fallback added to the normal equations when plain Gauss-Newton
/// hits a singular system (gimbal lock, rank-deficient charts).
pub const DAMPING_LAMBDA: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WahbaError {
    /// Point set is collinear (or empty): the profile matrix has at most one
    /// nonzero singular value and the optimal rotation is not unique.
    DegenerateInput,
}

impl fmt::Display for WahbaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WahbaError::DegenerateInput => {
                write!(f, "point set is degenerate; optimal rotation is not unique")
            }
        }
    }
}

impl std::error::Error for WahbaError {}

/// Paired body/world observations with their generating ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct WahbaInstance {
    pub points_body: Vec<Vector3<f64>>,
    pub points_world: Vec<Vector3<f64>>,
    pub r_true: Rotation,
    pub noise_sigma: f64,
}

impl WahbaInstance {
    pub fn len(&self) -> usize {
        self.points_body.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points_body.is_empty()
    }
}

/// Samples an instance: uniform ground-truth rotation, i.i.d. unit-sphere
/// body points, world points rotated and perturbed by isotropic Gaussian
/// noise of standard deviation `noise_sigma`.
pub fn generate_instance(n: usize, seed: u64, noise_sigma: f64) -> WahbaInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_instance_with_rng(n, &mut rng, noise_sigma)
}

/// Same as [`generate_instance`] but drawing from a caller-owned generator,
/// for benchmark runs that hand each replicate its own stream. Draw order:
/// the ground-truth rotation, then per point a unit-sphere sample followed by
/// a noise 3-vector (noise drawn only when `noise_sigma > 0`).
pub fn generate_instance_with_rng<R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
    noise_sigma: f64,
) -> WahbaInstance {
    assert!(n >= 3, "need at least 3 point pairs, got {n}");
    assert!(noise_sigma >= 0.0, "noise_sigma must be non-negative");
    let r_true = sample_uniform_rotation(rng);
    let mut points_body = Vec::with_capacity(n);
    let mut points_world = Vec::with_capacity(n);
    for _ in 0..n {
        let p: [f64; 3] = rng.sample(UnitSphere);
        let p_b = Vector3::from(p);
        let mut p_w = r_true.rotate(&p_b);
        if noise_sigma > 0.0 {
            p_w += noise_sigma
                * Vector3::new(
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                );
        }
        points_body.push(p_b);
        points_world.push(p_w);
    }
    WahbaInstance { points_body, points_world, r_true, noise_sigma }
}

/// Closed-form global optimum: projects the profile matrix
/// `B = Σ p_w p_bᵀ` onto SO(3).
pub fn solve_svd(inst: &WahbaInstance) -> Result<Rotation, WahbaError> {
    let mut b = Matrix3::zeros();
    for (p_w, p_b) in inst.points_world.iter().zip(&inst.points_body) {
        b += p_w * p_b.transpose();
    }
    let projection = project_so3(&b);
    if projection.degenerate {
        return Err(WahbaError::DegenerateInput);
    }
    Ok(projection.rotation)
}

/// How the solver parameterizes the rotation being estimated. Each variant
/// fixes a parameter vector layout, a retraction for applying steps, and an
/// analytic residual Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parameterization {
    /// All nine matrix entries as free parameters (row-major), plain
    /// addition as the retraction. Iterates leave SO(3); the error metric
    /// projects back before comparing.
    FlatMatrix,
    /// Intrinsic yaw-pitch-roll angles.
    EulerZyx,
    /// Global exponential coordinates (one chart for all of SO(3)).
    AxisAngle,
    /// Quaternion treated as a free 4-vector through the bilinear action,
    /// renormalized after every step.
    QuaternionNaive,
    /// Quaternion state with 3-dimensional steps mapped through the attitude
    /// Jacobian; retraction composes with the tangent-space quaternion.
    QuaternionAttitude,
    /// Rotation matrix state with tangent-space steps via the right ⊕.
    So3Manifold,
}

impl Parameterization {
    pub const ALL: [Parameterization; 6] = [
        Parameterization::FlatMatrix,
        Parameterization::EulerZyx,
        Parameterization::AxisAngle,
        Parameterization::QuaternionNaive,
        Parameterization::QuaternionAttitude,
        Parameterization::So3Manifold,
    ];

    /// Stable identifier used in CSV output and CLI flags.
    pub fn name(self) -> &'static str {
        match self {
            Parameterization::FlatMatrix => "flat",
            Parameterization::EulerZyx => "euler",
            Parameterization::AxisAngle => "axis-angle",
            Parameterization::QuaternionNaive => "quat-naive",
            Parameterization::QuaternionAttitude => "quat-attitude",
            Parameterization::So3Manifold => "so3",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Parameterization::ALL.iter().copied().find(|p| p.name() == name)
    }

    /// Length of the parameter vector θ.
    pub fn param_len(self) -> usize {
        match self {
            Parameterization::FlatMatrix | Parameterization::So3Manifold => 9,
            Parameterization::EulerZyx | Parameterization::AxisAngle => 3,
            Parameterization::QuaternionNaive | Parameterization::QuaternionAttitude => 4,
        }
    }

    /// Dimension of the Gauss-Newton step (columns of the Jacobian).
    pub fn step_dim(self) -> usize {
        match self {
            Parameterization::FlatMatrix => 9,
            Parameterization::QuaternionNaive => 4,
            _ => 3,
        }
    }

    pub fn params_from_rotation(self, r: &Rotation) -> DVector<f64> {
        match self {
            Parameterization::FlatMatrix | Parameterization::So3Manifold => {
                flatten_row_major(&r.matrix())
            }
            Parameterization::EulerZyx => {
                let dec = rotation_to_euler(r, EulerConvention::Zyx);
                DVector::from_column_slice(dec.angles.angles.as_slice())
            }
            Parameterization::AxisAngle => DVector::from_column_slice(log_so3(r).as_slice()),
            Parameterization::QuaternionNaive | Parameterization::QuaternionAttitude => {
                DVector::from_column_slice(Quaternion::from_rotation(r).as_vector().as_slice())
            }
        }
    }

    /// Raw matrix the residual uses: `r = p_w - M(θ) p_b`. Off-manifold for
    /// FlatMatrix and (in principle) for non-unit naive quaternions.
    pub fn action_matrix(self, theta: &DVector<f64>) -> Matrix3<f64> {
        match self {
            Parameterization::FlatMatrix | Parameterization::So3Manifold => {
                unflatten_row_major(theta)
            }
            Parameterization::EulerZyx => euler_to_rotation(&EulerAngles::new(
                EulerConvention::Zyx,
                Vector3::new(theta[0], theta[1], theta[2]),
            ))
            .into_matrix(),
            Parameterization::AxisAngle => {
                exp_so3(&Vector3::new(theta[0], theta[1], theta[2])).into_matrix()
            }
            Parameterization::QuaternionNaive | Parameterization::QuaternionAttitude => {
                quat_of(theta).rotation_action()
            }
        }
    }

    /// Valid rotation nearest to the current iterate, used for the error
    /// trace and the final answer.
    pub fn rotation_estimate(self, theta: &DVector<f64>) -> Rotation {
        match self {
            Parameterization::FlatMatrix => project_so3(&unflatten_row_major(theta)).rotation,
            Parameterization::So3Manifold => Rotation::snapped(unflatten_row_major(theta)),
            Parameterization::QuaternionNaive | Parameterization::QuaternionAttitude => {
                quat_of(theta).to_rotation()
            }
            _ => Rotation::from_matrix_unchecked(self.action_matrix(theta)),
        }
    }

    /// Applies a step in the variant's own geometry.
    pub fn retract(self, theta: &DVector<f64>, step: &DVector<f64>) -> DVector<f64> {
        assert_eq!(step.len(), self.step_dim());
        match self {
            Parameterization::FlatMatrix
            | Parameterization::EulerZyx
            | Parameterization::AxisAngle => theta + step,
            Parameterization::QuaternionNaive => {
                let q = theta + step;
                let n = q.norm();
                assert!(n > 0.0, "quaternion step collapsed to zero");
                q / n
            }
            Parameterization::QuaternionAttitude => {
                let delta = Quaternion::from_tangent(&Vector3::new(step[0], step[1], step[2]));
                DVector::from_column_slice((quat_of(theta) * delta).as_vector().as_slice())
            }
            Parameterization::So3Manifold => {
                let r = Rotation::snapped(unflatten_row_major(theta));
                let stepped = oplus_right(&r, &Vector3::new(step[0], step[1], step[2]));
                flatten_row_major(&stepped.matrix())
            }
        }
    }
}

fn quat_of(theta: &DVector<f64>) -> Quaternion {
    Quaternion::new(theta[0], Vector3::new(theta[1], theta[2], theta[3]))
}

fn flatten_row_major(m: &Matrix3<f64>) -> DVector<f64> {
    DVector::from_fn(9, |i, _| m[(i / 3, i % 3)])
}

fn unflatten_row_major(theta: &DVector<f64>) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| theta[3 * i + j])
}

/// Stacked residual `rᵢ = p_wⁱ - M(θ) p_bⁱ`, length 3N.
pub fn residual(theta: &DVector<f64>, par: Parameterization, inst: &WahbaInstance) -> DVector<f64> {
    let m = par.action_matrix(theta);
    let mut r = DVector::zeros(3 * inst.len());
    for (i, (p_w, p_b)) in inst.points_world.iter().zip(&inst.points_body).enumerate() {
        r.fixed_rows_mut::<3>(3 * i).copy_from(&(p_w - m * p_b));
    }
    r
}

/// Analytic Jacobian of [`residual`] with respect to the variant's step,
/// 3N × step_dim. For chart variants this is the plain parameter derivative;
/// for QuaternionAttitude and So3Manifold it is the derivative through the
/// retraction at zero step.
pub fn residual_jacobian(
    theta: &DVector<f64>,
    par: Parameterization,
    inst: &WahbaInstance,
) -> DMatrix<f64> {
    let n = inst.len();
    let mut j = DMatrix::zeros(3 * n, par.step_dim());
    match par {
        Parameterization::FlatMatrix => {
            // Row-major layout: world coordinate r only depends on matrix row
            // r, with derivative -p_bᵀ.
            for (i, p_b) in inst.points_body.iter().enumerate() {
                for row in 0..3 {
                    j.view_mut((3 * i + row, 3 * row), (1, 3))
                        .copy_from(&(-p_b.transpose()));
                }
            }
        }
        Parameterization::EulerZyx => {
            let (a, b, c) = (theta[0], theta[1], theta[2]);
            let rz = Axis::Z.elementary(a).into_matrix();
            let ry = Axis::Y.elementary(b).into_matrix();
            let rx = Axis::X.elementary(c).into_matrix();
            let d = [
                Axis::Z.elementary_derivative(a) * ry * rx,
                rz * Axis::Y.elementary_derivative(b) * rx,
                rz * ry * Axis::X.elementary_derivative(c),
            ];
            for (i, p_b) in inst.points_body.iter().enumerate() {
                for (col, dm) in d.iter().enumerate() {
                    j.fixed_view_mut::<3, 1>(3 * i, col).copy_from(&(-dm * p_b));
                }
            }
        }
        Parameterization::AxisAngle => {
            let phi = Vector3::new(theta[0], theta[1], theta[2]);
            let r = exp_so3(&phi).into_matrix();
            let jr = right_jacobian(&phi);
            for (i, p_b) in inst.points_body.iter().enumerate() {
                j.fixed_view_mut::<3, 3>(3 * i, 0)
                    .copy_from(&(r * hat(p_b) * jr));
            }
        }
        Parameterization::QuaternionNaive => {
            let q = quat_of(theta);
            for (i, p_b) in inst.points_body.iter().enumerate() {
                j.fixed_view_mut::<3, 4>(3 * i, 0)
                    .copy_from(&(-q.rotate_jacobian(p_b)));
            }
        }
        Parameterization::QuaternionAttitude => {
            // Step δ retracts as q ⊗ from_tangent(δ), whose derivative at
            // zero is G(q)/2; chain with the bilinear action derivative.
            let q = quat_of(theta);
            let g_half = q.attitude_jacobian() / 2.0;
            for (i, p_b) in inst.points_body.iter().enumerate() {
                j.fixed_view_mut::<3, 3>(3 * i, 0)
                    .copy_from(&(-q.rotate_jacobian(p_b) * g_half));
            }
        }
        Parameterization::So3Manifold => {
            let r = Rotation::snapped(unflatten_row_major(theta)).into_matrix();
            for (i, p_b) in inst.points_body.iter().enumerate() {
                j.fixed_view_mut::<3, 3>(3 * i, 0).copy_from(&(r * hat(p_b)));
            }
        }
    }
    j
}

/// Gauss-Newton from the identity rotation. See [`gauss_newton_solve_from`].
pub fn gauss_newton_solve(
    par: Parameterization,
    inst: &WahbaInstance,
    max_iters: usize,
    tol: f64,
) -> Result<(Rotation, ConvergenceTrace), WahbaError> {
    gauss_newton_solve_from(par, inst, &Rotation::identity(), max_iters, tol)
}

/// Gauss-Newton with steps `δ = (JᵀJ)⁻¹ Jᵀ r` applied through the variant's
/// retraction with a minus sign. The trace records geodesic error of each
/// iterate (iteration 0 is the initial guess) against the SVD solution;
/// iteration stops when the error drops below `tol` or `max_iters` steps
/// have been taken. Singular normal equations fall back to Levenberg damping
/// and are flagged in the trace.
pub fn gauss_newton_solve_from(
    par: Parameterization,
    inst: &WahbaInstance,
    init: &Rotation,
    max_iters: usize,
    tol: f64,
) -> Result<(Rotation, ConvergenceTrace), WahbaError> {
    assert!(max_iters >= 1);
    let r_svd = solve_svd(inst)?;
    Ok(gauss_newton_run(
        par,
        inst,
        &r_svd,
        par.params_from_rotation(init),
        max_iters,
        tol,
        |_| {},
    ))
}

/// Solver core shared by the public entry points; `observe` sees every
/// parameter iterate including the initial one (used by invariant tests and
/// diagnostics).
fn gauss_newton_run(
    par: Parameterization,
    inst: &WahbaInstance,
    r_reference: &Rotation,
    mut theta: DVector<f64>,
    max_iters: usize,
    tol: f64,
    mut observe: impl FnMut(&DVector<f64>),
) -> (Rotation, ConvergenceTrace) {
    let start = Instant::now();
    let mut trace = ConvergenceTrace::new();
    let mut damped = false;
    for k in 0..=max_iters {
        observe(&theta);
        let err = dist_geodesic(&par.rotation_estimate(&theta), r_reference);
        trace.push(k, err, start.elapsed().as_secs_f64(), damped);
        if err < tol {
            trace.converged = true;
            break;
        }
        if k == max_iters {
            break;
        }
        let r = residual(&theta, par, inst);
        let j = residual_jacobian(&theta, par, inst);
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * r;
        let (delta, was_damped) = solve_normal_equations(jtj, &jtr);
        damped = was_damped;
        theta = par.retract(&theta, &(-delta));
    }
    (par.rotation_estimate(&theta), trace)
}

/// Solves `(JᵀJ) δ = Jᵀr`, escalating Levenberg damping from
/// [`DAMPING_LAMBDA`] by decades if the factorization keeps failing.
fn solve_normal_equations(jtj: DMatrix<f64>, jtr: &DVector<f64>) -> (DVector<f64>, bool) {
    if let Some(chol) = jtj.clone().cholesky() {
        return (chol.solve(jtr), false);
    }
    let mut lambda = DAMPING_LAMBDA;
    loop {
        let damped = &jtj + DMatrix::identity(jtj.nrows(), jtj.ncols()) * lambda;
        if let Some(chol) = damped.cholesky() {
            return (chol.solve(jtr), true);
        }
        lambda *= 10.0;
        assert!(lambda < 1e12, "normal equations unsolvable even with damping");
    }
}
