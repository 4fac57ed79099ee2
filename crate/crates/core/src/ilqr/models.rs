//! Trajectory models over rotation states, one per parameterization.
//!
//! Every model shares the same underlying dynamics; the parameterization
//! only changes the deviation chart the optimizer works in. Three-parameter
//! charts (tangent, axis-angle, Euler) reuse the tangent-space linearization
//! with the attitude block conjugated by the chart's rate matrix; the naive
//! quaternion chart carries 4 raw components and differentiates through the
//! renormalization in the step.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3x4, Matrix4, Vector3, Vector4};

use crate::dynamics::{
    frame_linearize, frame_step, quad_linearize, quad_step, Linearization, QuadrotorParams,
    StateFrame, StateQuad,
};
use crate::representations::{
    euler_to_rotation, rotation_to_euler, Axis, EulerAngles, EulerConvention, Quaternion,
};
use crate::so3::{log_so3, ominus_right, oplus_right, right_jacobian, right_jacobian_inv, Rotation};

use super::TrajectoryModel;

/// Rate-matrix inverses switch to a Tikhonov-damped pseudo-inverse when the
/// chart loses rank (gimbal lock); below this determinant magnitude the
/// plain inverse is considered unreliable.
pub const CHART_SINGULARITY_TOLERANCE: f64 = 1e-8;

/// Deviation chart used for the rotation block of an optimizer state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RotationParam {
    /// Right-tangent deviations `log(R̄ᵀR)`, linearized on the manifold.
    So3,
    /// Global axis-angle coordinates `log(R)` compared by subtraction.
    AxisAngle,
    /// Intrinsic yaw-pitch-roll angles compared by plain subtraction, so
    /// deviations straddling the ±π wrap come out a revolution too large.
    EulerZyx,
    /// Raw quaternion components: 4 per rotation, renormalized by the step.
    QuatNaive,
    /// Unit quaternion state with 3-D deviations through the attitude
    /// Jacobian; shares the tangent-space linearization exactly.
    QuatAttitude,
}

impl RotationParam {
    pub const ALL: [RotationParam; 5] = [
        RotationParam::So3,
        RotationParam::AxisAngle,
        RotationParam::EulerZyx,
        RotationParam::QuatNaive,
        RotationParam::QuatAttitude,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RotationParam::So3 => "so3",
            RotationParam::AxisAngle => "axis-angle",
            RotationParam::EulerZyx => "euler",
            RotationParam::QuatNaive => "quat-naive",
            RotationParam::QuatAttitude => "quat-attitude",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// Number of deviation coordinates spent on one rotation block.
    pub fn attitude_dim(self) -> usize {
        match self {
            RotationParam::QuatNaive => 4,
            _ => 3,
        }
    }
}

/// Yaw-pitch-roll coordinates of a rotation (intrinsic ZYX).
pub fn euler_zyx(r: &Rotation) -> Vector3<f64> {
    rotation_to_euler(r, EulerConvention::Zyx).angles.angles
}

fn rotation_from_euler_zyx(z: &Vector3<f64>) -> Rotation {
    euler_to_rotation(&EulerAngles::new(EulerConvention::Zyx, *z))
}

/// Rate matrix of the yaw-pitch-roll chart: a chart velocity `ż` produces
/// the body angular velocity `ω = C(z)·ż`, with columns
/// `[(R_y R_x)ᵀ e_z | R_xᵀ e_y | e_x]`. Singular at pitch ±π/2.
pub fn euler_zyx_rate_matrix(z: &Vector3<f64>) -> Matrix3<f64> {
    let ry_t = Axis::Y.elementary(z[1]).transpose();
    let rx_t = Axis::X.elementary(z[2]).transpose();
    let col0 = rx_t.rotate(&ry_t.rotate(&Vector3::z()));
    let col1 = rx_t.rotate(&Vector3::y());
    Matrix3::from_columns(&[col0, col1, Vector3::x()])
}

/// Inverts a chart rate matrix, falling back to a damped pseudo-inverse in
/// the near-singular band so linearizations stay finite through gimbal lock.
fn chart_inverse(c: &Matrix3<f64>) -> Matrix3<f64> {
    if c.determinant().abs() > CHART_SINGULARITY_TOLERANCE {
        c.try_inverse().expect("determinant checked above")
    } else {
        let damped = c.transpose() * c + Matrix3::identity() * 1e-9;
        damped.try_inverse().expect("damped normal matrix is SPD") * c.transpose()
    }
}

/// Conjugates the attitude block of a tangent-space linearization into a
/// 3-parameter chart: with `δφ = E_in·Δz` at the current state and
/// `Δz' = E_out⁻¹·δφ'` at the next, `A_z = E_out⁻¹ A E_in`, `B_z = E_out⁻¹ B`.
fn conjugate_attitude(
    lin: &Linearization,
    offset: usize,
    e_in: &Matrix3<f64>,
    e_out_inv: &Matrix3<f64>,
) -> Linearization {
    let n = lin.a.nrows();
    let mut left = DMatrix::identity(n, n);
    left.view_mut((offset, offset), (3, 3)).copy_from(e_out_inv);
    let mut right = DMatrix::identity(n, n);
    right.view_mut((offset, offset), (3, 3)).copy_from(e_in);
    Linearization { a: &left * &lin.a * right, b: &left * &lin.b }
}

fn rotation_finite(r: &Rotation) -> bool {
    r.matrix().iter().all(|v| v.is_finite())
}

/// Frame state augmented with the canonical quaternion coordinates of its
/// rotation. The coordinates are read off the rotation at every step, so
/// quaternion charts see exactly what a conversion from the simulator state
/// yields, including the sign snap of the canonical hemisphere.
#[derive(Debug, Clone)]
pub struct OrientedState {
    pub frame: StateFrame,
    pub q: Quaternion,
}

impl OrientedState {
    pub fn new(frame: StateFrame) -> Self {
        let q = Quaternion::from_rotation(&frame.r);
        OrientedState { frame, q }
    }
}

/// Rigid frame whose control is the angular acceleration.
#[derive(Debug, Clone)]
pub struct FrameModel {
    pub param: RotationParam,
    pub dt: f64,
}

impl FrameModel {
    pub fn new(param: RotationParam, dt: f64) -> Self {
        assert!(dt > 0.0 && dt.is_finite());
        FrameModel { param, dt }
    }

    fn linearize_naive(&self, x: &OrientedState, u: &Vector3<f64>) -> Linearization {
        let dt = self.dt;
        let omega_next = x.frame.omega + u * dt;
        let parts = naive_attitude_blocks(&x.q, &omega_next, dt);
        // dφ/dω = dt·I and dφ/du = dt²·I for the double-integrator rotation.
        let dq_domega = parts.dq_dstep * dt;
        let dq_du = parts.dq_dstep * (dt * dt);

        let mut a = DMatrix::zeros(7, 7);
        a.view_mut((0, 0), (4, 4)).copy_from(&parts.dq_dq);
        a.view_mut((0, 4), (4, 3)).copy_from(&dq_domega);
        a.view_mut((4, 4), (3, 3)).copy_from(&Matrix3::identity());
        let mut b = DMatrix::zeros(7, 3);
        b.view_mut((0, 0), (4, 3)).copy_from(&dq_du);
        b.view_mut((4, 0), (3, 3)).copy_from(&(Matrix3::identity() * dt));
        Linearization { a, b }
    }
}

/// Shared pieces of the naive-quaternion attitude row: the Jacobian of
/// `q' = normalize(q ⊗ exp(ω'·dt/2))` with respect to the old quaternion and
/// with respect to the step tangent `ω'·dt`. This differentiates the smooth
/// product formula; the state coordinates themselves are canonical, so the
/// chart disagrees with this Jacobian by a sign wherever a step lands on the
/// opposite hemisphere.
struct NaiveAttitudeBlocks {
    dq_dq: Matrix4<f64>,
    /// `∂q'/∂(ω'·dt)`, to be chained with `∂(ω'·dt)/∂(·)`.
    dq_dstep: nalgebra::Matrix4x3<f64>,
}

fn naive_attitude_blocks(q: &Quaternion, omega_next: &Vector3<f64>, dt: f64) -> NaiveAttitudeBlocks {
    let phi = omega_next * dt;
    let dq_step = Quaternion::from_tangent(&phi);
    let qv = (*q * dq_step).as_vector();
    // Normalization Jacobian at unit norm.
    let j_n = Matrix4::identity() - qv * qv.transpose();
    let dq_dq = j_n * dq_step.right_matrix();
    let dq_dstep = j_n * q.left_matrix() * Quaternion::from_tangent_jacobian(&phi);
    NaiveAttitudeBlocks { dq_dq, dq_dstep }
}

/// Chart input map for raw quaternion coordinates: a perturbation `δq ∈ ℝ⁴`
/// moves the rotation by the body tangent `δφ = 2·G(q)ᵀ·δq` (the radial
/// direction is annihilated since `G(q)ᵀq = 0`).
fn quat_input_map(q: &Quaternion) -> Matrix3x4<f64> {
    2.0 * q.attitude_jacobian().transpose()
}

impl TrajectoryModel for FrameModel {
    type State = OrientedState;

    fn state_dim(&self) -> usize {
        self.param.attitude_dim() + 3
    }

    fn control_dim(&self) -> usize {
        3
    }

    fn step(&self, x: &OrientedState, u: &DVector<f64>) -> OrientedState {
        let u3 = Vector3::new(u[0], u[1], u[2]);
        let frame = frame_step(&x.frame, &u3, self.dt);
        OrientedState::new(frame)
    }

    fn linearize(&self, x: &OrientedState, u: &DVector<f64>) -> Linearization {
        let u3 = Vector3::new(u[0], u[1], u[2]);
        let lin = frame_linearize(&x.frame, &u3, self.dt);
        match self.param {
            RotationParam::So3 | RotationParam::QuatAttitude => lin,
            RotationParam::AxisAngle => {
                let next = frame_step(&x.frame, &u3, self.dt);
                conjugate_attitude(
                    &lin,
                    0,
                    &right_jacobian(&log_so3(&x.frame.r)),
                    &right_jacobian_inv(&log_so3(&next.r)),
                )
            }
            RotationParam::EulerZyx => {
                let next = frame_step(&x.frame, &u3, self.dt);
                conjugate_attitude(
                    &lin,
                    0,
                    &euler_zyx_rate_matrix(&euler_zyx(&x.frame.r)),
                    &chart_inverse(&euler_zyx_rate_matrix(&euler_zyx(&next.r))),
                )
            }
            RotationParam::QuatNaive => self.linearize_naive(x, &u3),
        }
    }

    fn state_diff(&self, x: &OrientedState, base: &OrientedState) -> DVector<f64> {
        let mut dx = DVector::zeros(self.state_dim());
        let att = self.param.attitude_dim();
        attitude_diff(self.param, x, base, &mut dx.view_mut((0, 0), (att, 1)));
        dx.view_mut((att, 0), (3, 1))
            .copy_from(&(x.frame.omega - base.frame.omega));
        dx
    }

    fn is_finite(&self, x: &OrientedState) -> bool {
        rotation_finite(&x.frame.r)
            && x.frame.omega.iter().all(|v| v.is_finite())
            && x.q.as_vector().iter().all(|v| v.is_finite())
    }
}

/// Writes the attitude deviation of `x` against `base` in the chart of
/// `param` into `out` (3 or 4 rows).
fn attitude_diff(
    param: RotationParam,
    x: &OrientedState,
    base: &OrientedState,
    out: &mut nalgebra::DMatrixViewMut<f64>,
) {
    match param {
        RotationParam::So3 => out.copy_from(&ominus_right(&x.frame.r, &base.frame.r)),
        RotationParam::AxisAngle => {
            out.copy_from(&(log_so3(&x.frame.r) - log_so3(&base.frame.r)))
        }
        RotationParam::EulerZyx => {
            out.copy_from(&(euler_zyx(&x.frame.r) - euler_zyx(&base.frame.r)))
        }
        RotationParam::QuatNaive => out.copy_from(&(x.q.as_vector() - base.q.as_vector())),
        RotationParam::QuatAttitude => {
            let dq = x.q.as_vector() - base.q.as_vector();
            out.copy_from(&(2.0 * base.q.attitude_jacobian().transpose() * dq));
        }
    }
}

/// Quadrotor state augmented with the canonical quaternion coordinates of
/// its rotation, mirroring [`OrientedState`].
#[derive(Debug, Clone)]
pub struct QuadIlqrState {
    pub quad: StateQuad,
    pub q: Quaternion,
}

impl QuadIlqrState {
    pub fn new(quad: StateQuad) -> Self {
        let q = Quaternion::from_rotation(&quad.r);
        QuadIlqrState { quad, q }
    }
}

/// Underactuated quadrotor driven by the wrench `u = (F_z, τ)`.
#[derive(Debug, Clone)]
pub struct QuadModel {
    pub param: RotationParam,
    pub params: QuadrotorParams,
}

impl QuadModel {
    pub fn new(param: RotationParam, params: QuadrotorParams) -> Self {
        assert!(params.validate());
        QuadModel { param, params }
    }

    fn linearize_naive(&self, x: &QuadIlqrState, u: &Vector4<f64>) -> Linearization {
        let dt = self.params.dt;
        let lin = quad_linearize(&x.quad, u, &self.params);
        let next = quad_step(&x.quad, u, &self.params);
        let parts = naive_attitude_blocks(&x.q, &next.omega, dt);
        let m_q = quat_input_map(&x.q);

        // Tangent blocks of the (p, φ, v, ω) linearization.
        let a = &lin.a;
        let domega_domega = a.fixed_view::<3, 3>(9, 9).into_owned();
        let domega_du = lin.b.fixed_view::<3, 4>(9, 0).into_owned();

        let dq_domega = parts.dq_dstep * dt * domega_domega;
        let dq_du = parts.dq_dstep * dt * domega_du;

        let mut az = DMatrix::zeros(13, 13);
        // Position row.
        az.view_mut((0, 0), (3, 3)).copy_from(&a.fixed_view::<3, 3>(0, 0).into_owned());
        az.view_mut((0, 3), (3, 4))
            .copy_from(&(a.fixed_view::<3, 3>(0, 3).into_owned() * m_q));
        az.view_mut((0, 7), (3, 3)).copy_from(&a.fixed_view::<3, 3>(0, 6).into_owned());
        az.view_mut((0, 10), (3, 3)).copy_from(&a.fixed_view::<3, 3>(0, 9).into_owned());
        // Quaternion row.
        az.view_mut((3, 3), (4, 4)).copy_from(&parts.dq_dq);
        az.view_mut((3, 10), (4, 3)).copy_from(&dq_domega);
        // Velocity row.
        az.view_mut((7, 3), (3, 4))
            .copy_from(&(a.fixed_view::<3, 3>(6, 3).into_owned() * m_q));
        az.view_mut((7, 7), (3, 3)).copy_from(&a.fixed_view::<3, 3>(6, 6).into_owned());
        az.view_mut((7, 10), (3, 3)).copy_from(&a.fixed_view::<3, 3>(6, 9).into_owned());
        // Angular-velocity row.
        az.view_mut((10, 10), (3, 3)).copy_from(&domega_domega);

        let mut bz = DMatrix::zeros(13, 4);
        bz.view_mut((0, 0), (3, 4)).copy_from(&lin.b.fixed_view::<3, 4>(0, 0).into_owned());
        bz.view_mut((3, 0), (4, 4)).copy_from(&dq_du);
        bz.view_mut((7, 0), (3, 4)).copy_from(&lin.b.fixed_view::<3, 4>(6, 0).into_owned());
        bz.view_mut((10, 0), (3, 4)).copy_from(&domega_du);
        Linearization { a: az, b: bz }
    }
}

impl TrajectoryModel for QuadModel {
    type State = QuadIlqrState;

    fn state_dim(&self) -> usize {
        self.param.attitude_dim() + 9
    }

    fn control_dim(&self) -> usize {
        4
    }

    fn step(&self, x: &QuadIlqrState, u: &DVector<f64>) -> QuadIlqrState {
        let u4 = Vector4::new(u[0], u[1], u[2], u[3]);
        let quad = quad_step(&x.quad, &u4, &self.params);
        QuadIlqrState::new(quad)
    }

    fn linearize(&self, x: &QuadIlqrState, u: &DVector<f64>) -> Linearization {
        let u4 = Vector4::new(u[0], u[1], u[2], u[3]);
        match self.param {
            RotationParam::So3 | RotationParam::QuatAttitude => {
                quad_linearize(&x.quad, &u4, &self.params)
            }
            RotationParam::AxisAngle => {
                let lin = quad_linearize(&x.quad, &u4, &self.params);
                let next = quad_step(&x.quad, &u4, &self.params);
                conjugate_attitude(
                    &lin,
                    3,
                    &right_jacobian(&log_so3(&x.quad.r)),
                    &right_jacobian_inv(&log_so3(&next.r)),
                )
            }
            RotationParam::EulerZyx => {
                let lin = quad_linearize(&x.quad, &u4, &self.params);
                let next = quad_step(&x.quad, &u4, &self.params);
                conjugate_attitude(
                    &lin,
                    3,
                    &euler_zyx_rate_matrix(&euler_zyx(&x.quad.r)),
                    &chart_inverse(&euler_zyx_rate_matrix(&euler_zyx(&next.r))),
                )
            }
            RotationParam::QuatNaive => self.linearize_naive(x, &u4),
        }
    }

    fn state_diff(&self, x: &QuadIlqrState, base: &QuadIlqrState) -> DVector<f64> {
        let att = self.param.attitude_dim();
        let mut dx = DVector::zeros(self.state_dim());
        dx.view_mut((0, 0), (3, 1)).copy_from(&(x.quad.p - base.quad.p));
        let xo = OrientedState { frame: StateFrame::new(x.quad.r, x.quad.omega), q: x.q };
        let bo = OrientedState { frame: StateFrame::new(base.quad.r, base.quad.omega), q: base.q };
        attitude_diff(self.param, &xo, &bo, &mut dx.view_mut((3, 0), (att, 1)));
        dx.view_mut((3 + att, 0), (3, 1)).copy_from(&(x.quad.v - base.quad.v));
        dx.view_mut((6 + att, 0), (3, 1)).copy_from(&(x.quad.omega - base.quad.omega));
        dx
    }

    fn is_finite(&self, x: &QuadIlqrState) -> bool {
        rotation_finite(&x.quad.r)
            && x.quad.p.iter().all(|v| v.is_finite())
            && x.quad.v.iter().all(|v| v.is_finite())
            && x.quad.omega.iter().all(|v| v.is_finite())
            && x.q.as_vector().iter().all(|v| v.is_finite())
    }
}

/// Chart-consistent perturbation of a frame state: inverts `state_diff` to
/// first order. Used by finite-difference oracles and scenario generators.
pub fn perturb_frame_state(
    param: RotationParam,
    x: &OrientedState,
    dz: &DVector<f64>,
) -> OrientedState {
    assert_eq!(dz.len(), param.attitude_dim() + 3);
    let att = param.attitude_dim();
    let datt = dz.rows(0, att).into_owned();
    let omega = x.frame.omega + dz.rows(att, 3).into_owned();
    let (r, q) = perturb_attitude(param, &x.frame.r, &x.q, &datt);
    OrientedState { frame: StateFrame::new(r, omega), q }
}

/// See [`perturb_frame_state`]; layout `(p, attitude, v, ω)`.
pub fn perturb_quad_state(
    param: RotationParam,
    x: &QuadIlqrState,
    dz: &DVector<f64>,
) -> QuadIlqrState {
    assert_eq!(dz.len(), param.attitude_dim() + 9);
    let att = param.attitude_dim();
    let datt = dz.rows(3, att).into_owned();
    let (r, q) = perturb_attitude(param, &x.quad.r, &x.q, &datt);
    let quad = StateQuad {
        p: x.quad.p + dz.rows(0, 3).into_owned(),
        r,
        v: x.quad.v + dz.rows(3 + att, 3).into_owned(),
        omega: x.quad.omega + dz.rows(6 + att, 3).into_owned(),
    };
    QuadIlqrState { quad, q }
}

fn perturb_attitude(
    param: RotationParam,
    r: &Rotation,
    q: &Quaternion,
    datt: &DVector<f64>,
) -> (Rotation, Quaternion) {
    match param {
        RotationParam::So3 => {
            let d = Vector3::new(datt[0], datt[1], datt[2]);
            (oplus_right(r, &d), *q * Quaternion::from_tangent(&d))
        }
        RotationParam::QuatAttitude => {
            let d = Vector3::new(datt[0], datt[1], datt[2]);
            let qv = q.as_vector() + 0.5 * q.attitude_jacobian() * d;
            let q2 = Quaternion::from_vector(&qv)
                .normalized()
                .expect("perturbation keeps the quaternion away from zero");
            (q2.to_rotation(), q2)
        }
        RotationParam::AxisAngle => {
            let z = log_so3(r) + Vector3::new(datt[0], datt[1], datt[2]);
            let r2 = crate::so3::exp_so3(&z);
            (r2, Quaternion::from_rotation(&r2))
        }
        RotationParam::EulerZyx => {
            let z = euler_zyx(r) + Vector3::new(datt[0], datt[1], datt[2]);
            let r2 = rotation_from_euler_zyx(&z);
            (r2, Quaternion::from_rotation(&r2))
        }
        RotationParam::QuatNaive => {
            let qv = q.as_vector() + Vector4::new(datt[0], datt[1], datt[2], datt[3]);
            let q2 = Quaternion::from_vector(&qv);
            (q2.to_rotation(), q2)
        }
    }
}

/// Plain linear time-invariant system `x' = Ax + Bu` on Euclidean states.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        assert!(a.is_square());
        assert_eq!(a.nrows(), b.nrows());
        LinearModel { a, b }
    }
}

impl TrajectoryModel for LinearModel {
    type State = DVector<f64>;

    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn control_dim(&self) -> usize {
        self.b.ncols()
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    fn linearize(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Linearization {
        Linearization { a: self.a.clone(), b: self.b.clone() }
    }

    fn state_diff(&self, x: &DVector<f64>, base: &DVector<f64>) -> DVector<f64> {
        x - base
    }

    fn is_finite(&self, x: &DVector<f64>) -> bool {
        x.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::dist_geodesic;
    use crate::representations::sample_uniform_rotation;
    use crate::so3::exp_so3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FD_EPS: f64 = 1e-6;
    const FD_TOLERANCE: f64 = 1e-5;

    fn random_vector3(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
        Vector3::from_fn(|_, _| rng.gen_range(-scale..scale))
    }

    /// Rotation suitable for finite differences in the given chart: away
    /// from the axis-angle branch cut and the Euler gimbal-lock band.
    fn random_chart_safe_rotation(rng: &mut ChaCha8Rng, param: RotationParam) -> Rotation {
        loop {
            let r = sample_uniform_rotation(rng);
            let ok = match param {
                RotationParam::AxisAngle => log_so3(&r).norm() < 2.8,
                RotationParam::EulerZyx => euler_zyx(&r)[1].abs() < 1.2,
                _ => true,
            };
            if ok {
                return r;
            }
        }
    }

    fn fd_linearize<M, P>(model: &M, x: &M::State, u: &DVector<f64>, perturb: P) -> Linearization
    where
        M: TrajectoryModel,
        P: Fn(&M::State, &DVector<f64>) -> M::State,
    {
        let n = model.state_dim();
        let m = model.control_dim();
        let base_next = model.step(x, u);
        let mut a = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut dz = DVector::zeros(n);
            dz[j] = FD_EPS;
            let plus = model.state_diff(&model.step(&perturb(x, &dz), u), &base_next);
            dz[j] = -FD_EPS;
            let minus = model.state_diff(&model.step(&perturb(x, &dz), u), &base_next);
            a.set_column(j, &((plus - minus) / (2.0 * FD_EPS)));
        }
        let mut b = DMatrix::zeros(n, m);
        for j in 0..m {
            let mut du = u.clone();
            du[j] += FD_EPS;
            let plus = model.state_diff(&model.step(x, &du), &base_next);
            du[j] = u[j] - FD_EPS;
            let minus = model.state_diff(&model.step(x, &du), &base_next);
            b.set_column(j, &((plus - minus) / (2.0 * FD_EPS)));
        }
        Linearization { a, b }
    }

    fn relative_error(analytic: &DMatrix<f64>, fd: &DMatrix<f64>) -> f64 {
        (analytic - fd).norm() / analytic.norm().max(1.0)
    }

    #[test]
    fn frame_linearization_matches_finite_differences_in_every_chart() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for param in RotationParam::ALL {
            let model = FrameModel::new(param, 0.02);
            for _ in 0..10 {
                let r = random_chart_safe_rotation(&mut rng, param);
                let x = OrientedState::new(StateFrame::new(r, random_vector3(&mut rng, 2.0)));
                let u = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
                let analytic = model.linearize(&x, &u);
                let fd = fd_linearize(&model, &x, &u, |x, dz| perturb_frame_state(param, x, dz));
                assert!(
                    relative_error(&analytic.a, &fd.a) < FD_TOLERANCE,
                    "A mismatch for {:?}: {}",
                    param,
                    relative_error(&analytic.a, &fd.a)
                );
                assert!(
                    relative_error(&analytic.b, &fd.b) < FD_TOLERANCE,
                    "B mismatch for {:?}: {}",
                    param,
                    relative_error(&analytic.b, &fd.b)
                );
            }
        }
    }

    #[test]
    fn quad_linearization_matches_finite_differences_in_every_chart() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params = QuadrotorParams::default();
        for param in RotationParam::ALL {
            let model = QuadModel::new(param, params.clone());
            for _ in 0..6 {
                let r = random_chart_safe_rotation(&mut rng, param);
                let quad = StateQuad {
                    p: random_vector3(&mut rng, 1.0),
                    r,
                    v: random_vector3(&mut rng, 1.0),
                    omega: random_vector3(&mut rng, 2.0),
                };
                let x = QuadIlqrState::new(quad);
                let mut u = DVector::zeros(4);
                u[0] = params.hover_thrust() + rng.gen_range(-2.0..2.0);
                for i in 1..4 {
                    u[i] = rng.gen_range(-0.05..0.05);
                }
                let analytic = model.linearize(&x, &u);
                let fd = fd_linearize(&model, &x, &u, |x, dz| perturb_quad_state(param, x, dz));
                assert!(
                    relative_error(&analytic.a, &fd.a) < FD_TOLERANCE,
                    "A mismatch for {:?}: {}",
                    param,
                    relative_error(&analytic.a, &fd.a)
                );
                assert!(
                    relative_error(&analytic.b, &fd.b) < FD_TOLERANCE,
                    "B mismatch for {:?}: {}",
                    param,
                    relative_error(&analytic.b, &fd.b)
                );
            }
        }
    }

    #[test]
    fn state_diff_against_itself_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for param in RotationParam::ALL {
            let frame_model = FrameModel::new(param, 0.02);
            let x = OrientedState::new(StateFrame::new(
                sample_uniform_rotation(&mut rng),
                random_vector3(&mut rng, 2.0),
            ));
            assert_eq!(frame_model.state_diff(&x, &x).norm(), 0.0);

            let quad_model = QuadModel::new(param, QuadrotorParams::default());
            let xq = QuadIlqrState::new(StateQuad {
                p: random_vector3(&mut rng, 1.0),
                r: sample_uniform_rotation(&mut rng),
                v: random_vector3(&mut rng, 1.0),
                omega: random_vector3(&mut rng, 1.0),
            });
            assert_eq!(quad_model.state_diff(&xq, &xq).norm(), 0.0);
        }
    }

    #[test]
    fn tangent_diff_matches_axis_angle_diff_to_second_order() {
        // For two rotations within δ of the identity the tangent-space
        // difference and the axis-angle coordinate difference agree to
        // O(δ²): log(exp(-z1)exp(z2)) = (z2 - z1) + O(‖z‖²).
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for &scale in &[1e-2, 1e-3] {
            let mut worst: f64 = 0.0;
            for _ in 0..50 {
                let z1 = random_vector3(&mut rng, scale);
                let z2 = random_vector3(&mut rng, scale);
                let (r1, r2) = (exp_so3(&z1), exp_so3(&z2));
                let tangent = ominus_right(&r2, &r1);
                let axis_angle = log_so3(&r2) - log_so3(&r1);
                worst = worst.max((tangent - axis_angle).norm());
            }
            assert!(
                worst < 2.0 * scale * scale,
                "scale {scale}: worst deviation {worst}"
            );
        }
    }

    #[test]
    fn naive_chart_radial_direction_is_flat() {
        // Scaling the stored quaternion does not change the rotation, so the
        // linearization must annihilate the radial direction.
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let model = FrameModel::new(RotationParam::QuatNaive, 0.02);
        for _ in 0..20 {
            let x = OrientedState::new(StateFrame::new(
                sample_uniform_rotation(&mut rng),
                random_vector3(&mut rng, 2.0),
            ));
            let u = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let lin = model.linearize(&x, &u);
            let mut radial = DVector::zeros(7);
            radial.rows_mut(0, 4).copy_from(&x.q.as_vector());
            assert!((lin.a * radial).norm() < 1e-12);
        }
    }

    #[test]
    fn euler_rate_matrix_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..30 {
            let z = Vector3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-3.0..3.0),
            );
            let c = euler_zyx_rate_matrix(&z);
            let r0 = rotation_from_euler_zyx(&z);
            for j in 0..3 {
                let mut dz = Vector3::zeros();
                dz[j] = FD_EPS;
                let plus = ominus_right(&rotation_from_euler_zyx(&(z + dz)), &r0);
                let minus = ominus_right(&rotation_from_euler_zyx(&(z - dz)), &r0);
                let fd = (plus - minus) / (2.0 * FD_EPS);
                assert!((fd - c.column(j)).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn euler_linearization_stays_finite_at_gimbal_lock() {
        let model = FrameModel::new(RotationParam::EulerZyx, 0.02);
        let r = Axis::Y.elementary(std::f64::consts::FRAC_PI_2);
        let x = OrientedState::new(StateFrame::new(r, Vector3::new(0.3, -0.2, 0.5)));
        let u = DVector::from_column_slice(&[0.1, 0.2, -0.3]);
        let lin = model.linearize(&x, &u);
        assert!(lin.a.iter().all(|v| v.is_finite()));
        assert!(lin.b.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn quaternion_coordinates_stay_canonical_along_rollouts() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let model = FrameModel::new(RotationParam::So3, 0.02);
        let mut x = OrientedState::new(StateFrame::new(
            sample_uniform_rotation(&mut rng),
            random_vector3(&mut rng, 1.0),
        ));
        for _ in 0..500 {
            let u = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            x = model.step(&x, &u);
            assert!(x.q.s >= 0.0);
        }
        assert!(dist_geodesic(&x.q.to_rotation(), &x.frame.r) < 1e-9);
        assert!((x.q.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perturbation_inverts_state_diff_to_first_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for param in RotationParam::ALL {
            let model = FrameModel::new(param, 0.02);
            let x = OrientedState::new(StateFrame::new(
                random_chart_safe_rotation(&mut rng, param),
                random_vector3(&mut rng, 1.0),
            ));
            let dz = DVector::from_fn(model.state_dim(), |_, _| rng.gen_range(-1e-4..1e-4));
            let recovered = model.state_diff(&perturb_frame_state(param, &x, &dz), &x);
            assert!(
                (recovered - &dz).norm() < 1e-8,
                "chart {:?} perturbation mismatch",
                param
            );
        }
    }

    #[test]
    fn linear_model_round_trips() {
        let model = LinearModel::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 0.1]),
        );
        let x = DVector::from_column_slice(&[1.0, -2.0]);
        let u = DVector::from_element(1, 0.5);
        let next = model.step(&x, &u);
        assert_eq!(next, &model.a * &x + &model.b * &u);
        assert_eq!(model.state_diff(&next, &x), &next - &x);
        let lin = model.linearize(&x, &u);
        assert_eq!(lin.a, model.a);
        assert_eq!(lin.b, model.b);
    }

    #[test]
    fn representation_names_round_trip() {
        for param in RotationParam::ALL {
            assert_eq!(RotationParam::from_name(param.name()), Some(param));
        }
        assert_eq!(RotationParam::from_name("flat"), None);
        assert_eq!(RotationParam::ALL.len(), 5);
    }

    #[test]
    fn state_dimensions_follow_the_chart() {
        assert_eq!(FrameModel::new(RotationParam::So3, 0.01).state_dim(), 6);
        assert_eq!(FrameModel::new(RotationParam::QuatNaive, 0.01).state_dim(), 7);
        assert_eq!(
            QuadModel::new(RotationParam::EulerZyx, QuadrotorParams::default()).state_dim(),
            12
        );
        assert_eq!(
            QuadModel::new(RotationParam::QuatNaive, QuadrotorParams::default()).state_dim(),
            13
        );
    }
}
