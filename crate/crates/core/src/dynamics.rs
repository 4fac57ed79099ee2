//! Rigid-body dynamics on SO(3): a torque-driven frame, an underactuated
//! quadrotor, semi-implicit Euler integration, analytic tangent-space
//! linearizations, and a finite-difference linearization oracle.
//!
//! Both models integrate velocities first and then configurations with the
//! *updated* velocities; every Jacobian block below is derived for exactly
//! that ordering. Linearizations live in tangent coordinates: rotation
//! deviations are right-perturbations `R = R̄ exp(δφ)`, everything else is
//! plain Euclidean.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::representations::{
    euler_to_rotation, rotation_to_euler, EulerAngles, EulerConvention, Quaternion,
};
use crate::so3::{exp_so3, hat, log_so3, ominus_right, oplus_right, right_jacobian, Rotation};

/// Orientation-only rigid body: `x = (R, ω)` with angular acceleration as
/// the control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateFrame {
    pub r: Rotation,
    pub omega: Vector3<f64>,
}

impl StateFrame {
    pub fn new(r: Rotation, omega: Vector3<f64>) -> Self {
        StateFrame { r, omega }
    }

    pub fn identity() -> Self {
        StateFrame { r: Rotation::identity(), omega: Vector3::zeros() }
    }
}

/// Quadrotor state: position in the world frame, attitude, and linear and
/// angular velocities in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateQuad {
    pub p: Vector3<f64>,
    pub r: Rotation,
    pub v: Vector3<f64>,
    pub omega: Vector3<f64>,
}

impl StateQuad {
    pub fn rest(p: Vector3<f64>) -> Self {
        StateQuad {
            p,
            r: Rotation::identity(),
            v: Vector3::zeros(),
            omega: Vector3::zeros(),
        }
    }
}

/// Physical constants of the quadrotor model. Gravity is a parameter so the
/// gravity-free equations stay testable; controls are the net wrench
/// `u = [F_z, τ]` with thrust restricted to the body z axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub inertia: Matrix3<f64>,
    pub gravity: f64,
    pub dt: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        QuadrotorParams {
            mass: 1.0,
            inertia: Matrix3::from_diagonal(&Vector3::new(0.01, 0.01, 0.02)),
            gravity: 9.81,
            dt: 0.01,
        }
    }
}

impl QuadrotorParams {
    /// Thrust that exactly cancels gravity at level attitude.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn validate(&self) -> bool {
        self.mass > 0.0
            && self.dt > 0.0
            && (self.inertia - self.inertia.transpose()).norm() < 1e-12
            && self.inertia.cholesky().is_some()
    }
}

/// Tangent-space Jacobians of one integration step: `A` maps state
/// deviations, `B` maps control deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// One semi-implicit step of the frame model: `ω' = ω + u·dt`, then
/// `R' = R ⊕ (ω'·dt)`.
pub fn frame_step(x: &StateFrame, u: &Vector3<f64>, dt: f64) -> StateFrame {
    let omega_next = x.omega + u * dt;
    StateFrame {
        r: oplus_right(&x.r, &(omega_next * dt)),
        omega: omega_next,
    }
}

/// Analytic Jacobians of [`frame_step`] in tangent coordinates `[δφ, δω]`.
pub fn frame_linearize(x: &StateFrame, u: &Vector3<f64>, dt: f64) -> Linearization {
    let omega_next = x.omega + u * dt;
    let w = omega_next * dt;
    let e_t = exp_so3(&w).into_matrix().transpose();
    let jr_dt = right_jacobian(&w) * dt;

    let mut a = DMatrix::zeros(6, 6);
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&e_t);
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&jr_dt);
    a.fixed_view_mut::<3, 3>(3, 3).copy_from(&Matrix3::identity());

    let mut b = DMatrix::zeros(6, 3);
    b.fixed_view_mut::<3, 3>(0, 0).copy_from(&(jr_dt * dt));
    b.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(Matrix3::identity() * dt));

    Linearization { a, b }
}

/// One semi-implicit step of the quadrotor: body-frame accelerations
/// `v̇ = F_z/m·e_z + Rᵀg_w - ω×v` and `ω̇ = I⁻¹(τ - ω×Iω)` update the
/// velocities, then `p' = p + R·v'·dt` and `R' = R ⊕ (ω'·dt)` use the
/// updated velocities.
pub fn quad_step(x: &StateQuad, u: &Vector4<f64>, params: &QuadrotorParams) -> StateQuad {
    let dt = params.dt;
    let g_world = Vector3::new(0.0, 0.0, -params.gravity);
    let tau = Vector3::new(u[1], u[2], u[3]);
    let inertia_inv = params
        .inertia
        .try_inverse()
        .expect("inertia matrix must be invertible");

    let v_dot = (u[0] / params.mass) * Vector3::z() + x.r.transpose().rotate(&g_world)
        - x.omega.cross(&x.v);
    let omega_dot = inertia_inv * (tau - x.omega.cross(&(params.inertia * x.omega)));

    let v_next = x.v + v_dot * dt;
    let omega_next = x.omega + omega_dot * dt;
    StateQuad {
        p: x.p + x.r.rotate(&v_next) * dt,
        r: oplus_right(&x.r, &(omega_next * dt)),
        v: v_next,
        omega: omega_next,
    }
}

/// Analytic Jacobians of [`quad_step`] in tangent coordinates
/// `[δp, δφ, δv, δω]` and controls `[F_z, τ]`.
///
/// Because velocities are updated first, position and attitude rows pick up
/// through-the-velocity terms of order dt²; the attitude row is the exact
/// group derivative `∂δφ'/∂δφ = exp(ω'dt)ᵀ`, `∂δφ'/∂δω = J_r(ω'dt)·dt·∂ω'/∂ω`.
pub fn quad_linearize(x: &StateQuad, u: &Vector4<f64>, params: &QuadrotorParams) -> Linearization {
    let dt = params.dt;
    let g_world = Vector3::new(0.0, 0.0, -params.gravity);
    let inertia_inv = params
        .inertia
        .try_inverse()
        .expect("inertia matrix must be invertible");
    let r = x.r.matrix();
    let g_body = x.r.transpose().rotate(&g_world);

    let v_dot = (u[0] / params.mass) * Vector3::z() + g_body - x.omega.cross(&x.v);
    let v_next = x.v + v_dot * dt;
    let omega_dot = inertia_inv
        * (Vector3::new(u[1], u[2], u[3]) - x.omega.cross(&(params.inertia * x.omega)));
    let omega_next = x.omega + omega_dot * dt;

    let dv_dphi = dt * hat(&g_body);
    let dv_dv = Matrix3::identity() - dt * hat(&x.omega);
    let dv_domega = dt * hat(&x.v);
    let domega_domega = Matrix3::identity()
        - dt * inertia_inv * (hat(&x.omega) * params.inertia - hat(&(params.inertia * x.omega)));

    let w = omega_next * dt;
    let e_t = exp_so3(&w).into_matrix().transpose();
    let jr_dt = right_jacobian(&w) * dt;

    let mut a = DMatrix::zeros(12, 12);
    // Position row: p' = p + R exp(δφ) v' dt with v' itself φ-dependent.
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-r * hat(&v_next) * dt + r * dv_dphi * dt));
    a.fixed_view_mut::<3, 3>(0, 6).copy_from(&(r * dv_dv * dt));
    a.fixed_view_mut::<3, 3>(0, 9).copy_from(&(r * dv_domega * dt));
    // Attitude row.
    a.fixed_view_mut::<3, 3>(3, 3).copy_from(&e_t);
    a.fixed_view_mut::<3, 3>(3, 9)
        .copy_from(&(jr_dt * domega_domega));
    // Body-velocity row.
    a.fixed_view_mut::<3, 3>(6, 3).copy_from(&dv_dphi);
    a.fixed_view_mut::<3, 3>(6, 6).copy_from(&dv_dv);
    a.fixed_view_mut::<3, 3>(6, 9).copy_from(&dv_domega);
    // Angular-velocity row.
    a.fixed_view_mut::<3, 3>(9, 9).copy_from(&domega_domega);

    let mut b = DMatrix::zeros(12, 4);
    let dv_dfz = (dt / params.mass) * Vector3::z();
    b.fixed_view_mut::<3, 1>(0, 0).copy_from(&(r * dv_dfz * dt));
    b.fixed_view_mut::<3, 3>(3, 1)
        .copy_from(&(jr_dt * dt * inertia_inv));
    b.fixed_view_mut::<3, 1>(6, 0).copy_from(&dv_dfz);
    b.fixed_view_mut::<3, 3>(9, 1).copy_from(&(dt * inertia_inv));

    Linearization { a, b }
}

/// States that support manifold-aware perturbation and difference, used by
/// the finite-difference oracle and the trajectory optimizer.
pub trait TangentSpace: Clone {
    fn tangent_dim(&self) -> usize;
    /// `self ⊕ delta`.
    fn perturb(&self, delta: &DVector<f64>) -> Self;
    /// `self ⊖ base`, the inverse of `perturb` at `base`.
    fn difference(&self, base: &Self) -> DVector<f64>;
}

impl TangentSpace for DVector<f64> {
    fn tangent_dim(&self) -> usize {
        self.len()
    }

    fn perturb(&self, delta: &DVector<f64>) -> Self {
        self + delta
    }

    fn difference(&self, base: &Self) -> DVector<f64> {
        self - base
    }
}

impl TangentSpace for StateFrame {
    fn tangent_dim(&self) -> usize {
        6
    }

    fn perturb(&self, delta: &DVector<f64>) -> Self {
        StateFrame {
            r: oplus_right(&self.r, &delta.fixed_rows::<3>(0).into()),
            omega: self.omega + Vector3::from(delta.fixed_rows::<3>(3)),
        }
    }

    fn difference(&self, base: &Self) -> DVector<f64> {
        let mut d = DVector::zeros(6);
        d.fixed_rows_mut::<3>(0)
            .copy_from(&ominus_right(&self.r, &base.r));
        d.fixed_rows_mut::<3>(3).copy_from(&(self.omega - base.omega));
        d
    }
}

impl TangentSpace for StateQuad {
    fn tangent_dim(&self) -> usize {
        12
    }

    fn perturb(&self, delta: &DVector<f64>) -> Self {
        StateQuad {
            p: self.p + Vector3::from(delta.fixed_rows::<3>(0)),
            r: oplus_right(&self.r, &delta.fixed_rows::<3>(3).into()),
            v: self.v + Vector3::from(delta.fixed_rows::<3>(6)),
            omega: self.omega + Vector3::from(delta.fixed_rows::<3>(9)),
        }
    }

    fn difference(&self, base: &Self) -> DVector<f64> {
        let mut d = DVector::zeros(12);
        d.fixed_rows_mut::<3>(0).copy_from(&(self.p - base.p));
        d.fixed_rows_mut::<3>(3)
            .copy_from(&ominus_right(&self.r, &base.r));
        d.fixed_rows_mut::<3>(6).copy_from(&(self.v - base.v));
        d.fixed_rows_mut::<3>(9).copy_from(&(self.omega - base.omega));
        d
    }
}

/// Central-difference linearization oracle with manifold-aware perturbations:
/// column `j` of `A` is `(f(x ⊕ εeⱼ) ⊖ f(x)) - (f(x ⊖ εeⱼ) ⊖ f(x))` over
/// `2ε`, and similarly for `B` with plain control perturbations.
pub fn finite_diff_linearize<X: TangentSpace>(
    step_fn: impl Fn(&X, &DVector<f64>) -> X,
    x: &X,
    u: &DVector<f64>,
    eps: f64,
) -> Linearization {
    assert!(
        (1e-8..=1e-4).contains(&eps),
        "step size {eps} outside the trustworthy central-difference range"
    );
    let n = x.tangent_dim();
    let m = u.len();
    let nominal = step_fn(x, u);
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = eps;
        let plus = step_fn(&x.perturb(&e), u).difference(&nominal);
        e[j] = -eps;
        let minus = step_fn(&x.perturb(&e), u).difference(&nominal);
        a.set_column(j, &((plus - minus) / (2.0 * eps)));
    }
    let mut b = DMatrix::zeros(n, m);
    for j in 0..m {
        let mut du = u.clone();
        du[j] += eps;
        let plus = step_fn(x, &du).difference(&nominal);
        du[j] = u[j] - eps;
        let minus = step_fn(x, &du).difference(&nominal);
        b.set_column(j, &((plus - minus) / (2.0 * eps)));
    }
    Linearization { a, b }
}

/// Flat encodings of the rotation component used when a state has to cross
/// an interface that wants plain vectors (policy inputs, chart-based
/// optimizers, serialization).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RotationEncoding {
    EulerZyx,
    AxisAngle,
    Quaternion,
    FlatMatrix,
}

impl RotationEncoding {
    pub const ALL: [RotationEncoding; 4] = [
        RotationEncoding::EulerZyx,
        RotationEncoding::AxisAngle,
        RotationEncoding::Quaternion,
        RotationEncoding::FlatMatrix,
    ];

    pub fn len(self) -> usize {
        match self {
            RotationEncoding::EulerZyx | RotationEncoding::AxisAngle => 3,
            RotationEncoding::Quaternion => 4,
            RotationEncoding::FlatMatrix => 9,
        }
    }

    pub fn encode(self, r: &Rotation) -> DVector<f64> {
        match self {
            RotationEncoding::EulerZyx => {
                let dec = rotation_to_euler(r, EulerConvention::Zyx);
                DVector::from_column_slice(dec.angles.angles.as_slice())
            }
            RotationEncoding::AxisAngle => DVector::from_column_slice(log_so3(r).as_slice()),
            RotationEncoding::Quaternion => {
                DVector::from_column_slice(Quaternion::from_rotation(r).as_vector().as_slice())
            }
            RotationEncoding::FlatMatrix => {
                DVector::from_fn(9, |i, _| r.matrix()[(i / 3, i % 3)])
            }
        }
    }

    pub fn decode(self, v: &DVector<f64>) -> Rotation {
        assert_eq!(v.len(), self.len());
        match self {
            RotationEncoding::EulerZyx => euler_to_rotation(&EulerAngles::new(
                EulerConvention::Zyx,
                Vector3::new(v[0], v[1], v[2]),
            )),
            RotationEncoding::AxisAngle => exp_so3(&Vector3::new(v[0], v[1], v[2])),
            RotationEncoding::Quaternion => {
                Quaternion::new(v[0], Vector3::new(v[1], v[2], v[3])).to_rotation()
            }
            RotationEncoding::FlatMatrix => {
                Rotation::snapped(Matrix3::from_fn(|i, j| v[3 * i + j]))
            }
        }
    }
}

/// `[encode(R), ω]`.
pub fn encode_frame_state(x: &StateFrame, enc: RotationEncoding) -> DVector<f64> {
    let mut out = DVector::zeros(enc.len() + 3);
    out.rows_mut(0, enc.len()).copy_from(&enc.encode(&x.r));
    out.rows_mut(enc.len(), 3).copy_from(&x.omega);
    out
}

pub fn decode_frame_state(v: &DVector<f64>, enc: RotationEncoding) -> StateFrame {
    assert_eq!(v.len(), enc.len() + 3);
    StateFrame {
        r: enc.decode(&v.rows(0, enc.len()).into_owned()),
        omega: Vector3::from(v.fixed_rows::<3>(enc.len())),
    }
}

/// `[p, encode(R), v, ω]`.
pub fn encode_quad_state(x: &StateQuad, enc: RotationEncoding) -> DVector<f64> {
    let k = enc.len();
    let mut out = DVector::zeros(k + 9);
    out.fixed_rows_mut::<3>(0).copy_from(&x.p);
    out.rows_mut(3, k).copy_from(&enc.encode(&x.r));
    out.fixed_rows_mut::<3>(3 + k).copy_from(&x.v);
    out.fixed_rows_mut::<3>(6 + k).copy_from(&x.omega);
    out
}

pub fn decode_quad_state(v: &DVector<f64>, enc: RotationEncoding) -> StateQuad {
    let k = enc.len();
    assert_eq!(v.len(), k + 9);
    StateQuad {
        p: Vector3::from(v.fixed_rows::<3>(0)),
        r: enc.decode(&v.rows(3, k).into_owned()),
        v: Vector3::from(v.fixed_rows::<3>(3 + k)),
        omega: Vector3::from(v.fixed_rows::<3>(6 + k)),
    }
}
