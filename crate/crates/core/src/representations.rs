//! Chart-style orientation representations: Euler angle conventions,
//! axis-angle, and scalar-first quaternions.
//!
//! Euler angles support the six Tait-Bryan conventions plus ZXZ and ZYZ, all
//! intrinsic: `R = R_{a1}(θ1) R_{a2}(θ2) R_{a3}(θ3)`. Extraction from a
//! rotation flags gimbal lock instead of erroring; at lock the third angle is
//! pinned to zero and the first absorbs the free sum/difference.
//!
//! Quaternions are stored scalar-first, `q = [q_s, q_v]`. The algebra exposes
//! the left/right product matrices `L(q)`, `R(q)`, the pure-vector lift `H`,
//! the conjugation matrix `T`, the rotation action `A(q) = Hᵀ L(q) R(q)ᵀ H`
//! (bilinear in `q`, so it is defined off the unit sphere, where it scales by
//! `‖q‖²`), and the 4x3 attitude Jacobian `G(q) = L(q) H` that maps tangent
//! 3-vectors to quaternion-space directions.

use std::fmt;

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Matrix4x3, Vector3, Vector4};

use crate::so3::{exp_so3, hat, log_so3, Rotation};

/// |cos θ2| (Tait-Bryan) or |sin θ2| (proper Euler) below this flags gimbal
/// lock: the first and third rotation axes have collapsed onto each other.
pub const GIMBAL_LOCK_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn unit(self) -> Vector3<f64> {
        let mut e = Vector3::zeros();
        e[self.index()] = 1.0;
        e
    }

    /// Elementary rotation about this axis.
    pub fn elementary(self, angle: f64) -> Rotation {
        let (s, c) = angle.sin_cos();
        let m = match self {
            Axis::X => Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
            Axis::Y => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            Axis::Z => Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
        };
        Rotation::from_matrix_unchecked(m)
    }

    /// d/dangle of [`Axis::elementary`].
    pub fn elementary_derivative(self, angle: f64) -> Matrix3<f64> {
        let (s, c) = angle.sin_cos();
        match self {
            Axis::X => Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s),
            Axis::Y => Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s),
            Axis::Z => Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0),
        }
    }
}

/// Intrinsic rotation-axis sequences. `Zyx` is the yaw-pitch-roll default used
/// by the benchmark tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EulerConvention {
    Xyz,
    Xzy,
    Yxz,
    Yzx,
    Zxy,
    Zyx,
    Zxz,
    Zyz,
}

impl EulerConvention {
    pub fn axes(self) -> [Axis; 3] {
        use Axis::*;
        match self {
            EulerConvention::Xyz => [X, Y, Z],
            EulerConvention::Xzy => [X, Z, Y],
            EulerConvention::Yxz => [Y, X, Z],
            EulerConvention::Yzx => [Y, Z, X],
            EulerConvention::Zxy => [Z, X, Y],
            EulerConvention::Zyx => [Z, Y, X],
            EulerConvention::Zxz => [Z, X, Z],
            EulerConvention::Zyz => [Z, Y, Z],
        }
    }

    /// Proper Euler sequences repeat the first axis; Tait-Bryan use three.
    pub fn is_proper(self) -> bool {
        matches!(self, EulerConvention::Zxz | EulerConvention::Zyz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub convention: EulerConvention,
    pub angles: Vector3<f64>,
}

impl EulerAngles {
    pub fn new(convention: EulerConvention, angles: Vector3<f64>) -> Self {
        EulerAngles { convention, angles }
    }
}

/// Result of extracting Euler angles from a rotation. `gimbal_lock` reports
/// that the decomposition was degenerate and θ3 was pinned to zero; the
/// angles still reproduce the rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerDecomposition {
    pub angles: EulerAngles,
    pub gimbal_lock: bool,
}

pub fn euler_to_rotation(e: &EulerAngles) -> Rotation {
    let [a1, a2, a3] = e.convention.axes();
    &(&a1.elementary(e.angles[0]) * &a2.elementary(e.angles[1])) * &a3.elementary(e.angles[2])
}

/// Extracts intrinsic Euler angles in canonical ranges: θ1, θ3 ∈ (-π, π];
/// θ2 ∈ [-π/2, π/2] for Tait-Bryan and θ2 ∈ [0, π] for proper sequences.
pub fn rotation_to_euler(r: &Rotation, convention: EulerConvention) -> EulerDecomposition {
    let m = r.matrix();
    let [a1, a2, a3] = convention.axes();
    let (i, j, k) = (a1.index(), a2.index(), a3.index());

    if convention.is_proper() {
        let cos_t2 = m[(2, 2)].clamp(-1.0, 1.0);
        let theta2 = cos_t2.acos();
        if theta2.sin().abs() < GIMBAL_LOCK_TOLERANCE {
            let theta1 = locked_first_angle(r, a1, a2, theta2);
            return EulerDecomposition {
                angles: EulerAngles::new(convention, Vector3::new(theta1, theta2, 0.0)),
                gimbal_lock: true,
            };
        }
        let (theta1, theta3) = match convention {
            EulerConvention::Zyz => (
                m[(1, 2)].atan2(m[(0, 2)]),
                m[(2, 1)].atan2(-m[(2, 0)]),
            ),
            EulerConvention::Zxz => (
                m[(0, 2)].atan2(-m[(1, 2)]),
                m[(2, 0)].atan2(m[(2, 1)]),
            ),
            _ => unreachable!(),
        };
        return EulerDecomposition {
            angles: EulerAngles::new(convention, Vector3::new(theta1, theta2, theta3)),
            gimbal_lock: false,
        };
    }

    // Tait-Bryan: R[i,k] = ε sin θ2 with ε the permutation sign of (i, j, k).
    let eps = if (i + 1) % 3 == j { 1.0 } else { -1.0 };
    let sin_t2 = (eps * m[(i, k)]).clamp(-1.0, 1.0);
    let theta2 = sin_t2.asin();
    if theta2.cos().abs() < GIMBAL_LOCK_TOLERANCE {
        let theta1 = locked_first_angle(r, a1, a2, theta2);
        return EulerDecomposition {
            angles: EulerAngles::new(convention, Vector3::new(theta1, theta2, 0.0)),
            gimbal_lock: true,
        };
    }
    let theta1 = (-eps * m[(j, k)]).atan2(m[(k, k)]);
    let theta3 = (-eps * m[(i, j)]).atan2(m[(i, i)]);
    EulerDecomposition {
        angles: EulerAngles::new(convention, Vector3::new(theta1, theta2, theta3)),
        gimbal_lock: false,
    }
}

/// At gimbal lock θ3 is pinned to zero, so `R ≈ R_{a1}(θ1) R_{a2}(θ2)`.
/// Peeling the middle rotation off leaves an elementary rotation about `a1`.
fn locked_first_angle(r: &Rotation, a1: Axis, a2: Axis, theta2: f64) -> f64 {
    let residual = r * &a2.elementary(theta2).transpose();
    let m = residual.matrix();
    let i = a1.index();
    let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
    m[(i2, i1)].atan2(m[(i1, i1)])
}

/// Axis-angle vector of a rotation: the canonical logarithm, `‖φ‖ ≤ π`.
pub fn rotation_to_axis_angle(r: &Rotation) -> Vector3<f64> {
    log_so3(r)
}

/// Rotation of an axis-angle vector: the exponential map.
pub fn axis_angle_to_rotation(phi: &Vector3<f64>) -> Rotation {
    exp_so3(phi)
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuaternionError {
    /// Normalization of a (near-)zero quaternion is undefined.
    ZeroNorm,
}

impl fmt::Display for QuaternionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuaternionError::ZeroNorm => write!(f, "cannot normalize a zero quaternion"),
        }
    }
}

impl std::error::Error for QuaternionError {}

/// Scalar-first quaternion `q = [s, v]`. Not forced to unit norm: the rotation
/// action and its Jacobians are bilinear and well defined on all of R⁴, which
/// is exactly what the naive-quaternion solver variants exercise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub s: f64,
    pub v: Vector3<f64>,
}

impl Quaternion {
    pub fn new(s: f64, v: Vector3<f64>) -> Self {
        Quaternion { s, v }
    }

    pub fn identity() -> Self {
        Quaternion { s: 1.0, v: Vector3::zeros() }
    }

    pub fn from_vector(q: &Vector4<f64>) -> Self {
        Quaternion { s: q[0], v: Vector3::new(q[1], q[2], q[3]) }
    }

    /// Scalar-first coordinate vector `[s, v1, v2, v3]`.
    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.s, self.v.x, self.v.y, self.v.z)
    }

    pub fn norm(&self) -> f64 {
        (self.s * self.s + self.v.norm_squared()).sqrt()
    }

    pub fn normalized(&self) -> Result<Self, QuaternionError> {
        let n = self.norm();
        if n < 1e-300 {
            return Err(QuaternionError::ZeroNorm);
        }
        Ok(Quaternion { s: self.s / n, v: self.v / n })
    }

    pub fn conjugate(&self) -> Self {
        Quaternion { s: self.s, v: -self.v }
    }

    /// Left product matrix: `q ⊗ p = L(q) p`.
    pub fn left_matrix(&self) -> Matrix4<f64> {
        let s = self.s;
        let v = self.v;
        let block = s * Matrix3::identity() + hat(&v);
        let mut m = Matrix4::zeros();
        m[(0, 0)] = s;
        m.fixed_view_mut::<1, 3>(0, 1).copy_from(&(-v.transpose()));
        m.fixed_view_mut::<3, 1>(1, 0).copy_from(&v);
        m.fixed_view_mut::<3, 3>(1, 1).copy_from(&block);
        m
    }

    /// Right product matrix: `p ⊗ q = R(q) p`.
    pub fn right_matrix(&self) -> Matrix4<f64> {
        let s = self.s;
        let v = self.v;
        let block = s * Matrix3::identity() - hat(&v);
        let mut m = Matrix4::zeros();
        m[(0, 0)] = s;
        m.fixed_view_mut::<1, 3>(0, 1).copy_from(&(-v.transpose()));
        m.fixed_view_mut::<3, 1>(1, 0).copy_from(&v);
        m.fixed_view_mut::<3, 3>(1, 1).copy_from(&block);
        m
    }

    /// Lift of a 3-vector into a pure quaternion: `H r = [0, r]`.
    pub fn h_matrix() -> Matrix4x3<f64> {
        let mut m = Matrix4x3::zeros();
        m.fixed_view_mut::<3, 3>(1, 0).copy_from(&Matrix3::identity());
        m
    }

    /// Conjugation matrix: `q* = T q`, `T = diag(1, -1, -1, -1)`.
    pub fn t_matrix() -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::new(1.0, -1.0, -1.0, -1.0))
    }

    /// Rotation action `A(q) = Hᵀ L(q) R(q)ᵀ H`, expanded to
    /// `(s² - vᵀv) I + 2 v vᵀ + 2 s v∧`. Homogeneous of degree 2 in `q`: for
    /// a unit quaternion this is the rotation matrix, otherwise it scales by
    /// `‖q‖²`.
    pub fn rotation_action(&self) -> Matrix3<f64> {
        let s = self.s;
        let v = self.v;
        (s * s - v.norm_squared()) * Matrix3::identity()
            + 2.0 * v * v.transpose()
            + 2.0 * s * hat(&v)
    }

    /// Rotates `r` by this quaternion (normalizing first).
    pub fn rotate(&self, r: &Vector3<f64>) -> Vector3<f64> {
        self.to_rotation().rotate(r)
    }

    pub fn to_rotation(&self) -> Rotation {
        let q = self.normalized().expect("zero quaternion has no rotation");
        Rotation::snapped(q.rotation_action())
    }

    /// Shepperd's method: branch on the largest of the trace and the diagonal
    /// entries so the divisor is always well away from zero. The sign is
    /// canonicalized to `s ≥ 0` (first nonzero vector component positive when
    /// `s = 0`).
    pub fn from_rotation(r: &Rotation) -> Self {
        let m = r.matrix();
        let tr = m.trace();
        let mut q = if tr > 0.0 {
            let d = (tr + 1.0).sqrt() * 2.0;
            Quaternion::new(
                d / 4.0,
                Vector3::new(
                    (m[(2, 1)] - m[(1, 2)]) / d,
                    (m[(0, 2)] - m[(2, 0)]) / d,
                    (m[(1, 0)] - m[(0, 1)]) / d,
                ),
            )
        } else {
            let i = if m[(0, 0)] >= m[(1, 1)] && m[(0, 0)] >= m[(2, 2)] {
                0
            } else if m[(1, 1)] >= m[(2, 2)] {
                1
            } else {
                2
            };
            let j = (i + 1) % 3;
            let k = (i + 2) % 3;
            let d = (m[(i, i)] - m[(j, j)] - m[(k, k)] + 1.0).sqrt() * 2.0;
            let mut v = Vector3::zeros();
            v[i] = d / 4.0;
            v[j] = (m[(j, i)] + m[(i, j)]) / d;
            v[k] = (m[(k, i)] + m[(i, k)]) / d;
            Quaternion::new((m[(k, j)] - m[(j, k)]) / d, v)
        };
        if q.s < 0.0 || (q.s == 0.0 && first_nonzero(&q.v) < 0.0) {
            q = Quaternion::new(-q.s, -q.v);
        }
        q
    }

    /// Attitude Jacobian `G(q) = L(q) H ∈ R^{4×3}`: the derivative of
    /// `q ⊗ [1, δ]` with respect to `δ` at zero. Maps tangent gradients as
    /// `∇J = (∂J/∂q) G(q)`.
    pub fn attitude_jacobian(&self) -> Matrix4x3<f64> {
        let mut g = Matrix4x3::zeros();
        g.fixed_view_mut::<1, 3>(0, 0).copy_from(&(-self.v.transpose()));
        g.fixed_view_mut::<3, 3>(1, 0)
            .copy_from(&(self.s * Matrix3::identity() + hat(&self.v)));
        g
    }

    /// Exponential of the pure quaternion `[0, w]`: `[cos ‖w‖, sin ‖w‖ ŵ]`.
    /// Its derivative at `w = 0` is exactly `H`, which is what makes the
    /// attitude Jacobian the exact tangent-gradient map.
    pub fn exp_pure(w: &Vector3<f64>) -> Self {
        let theta = w.norm();
        if theta < 1e-9 {
            return Quaternion::new(1.0 - theta * theta / 2.0, *w);
        }
        Quaternion::new(theta.cos(), (theta.sin() / theta) * w)
    }

    /// Unit quaternion of the rotation `exp_so3(φ)`: the half-angle form
    /// `[cos(θ/2), sin(θ/2) a]`.
    pub fn from_tangent(phi: &Vector3<f64>) -> Self {
        Quaternion::exp_pure(&(phi / 2.0))
    }

    /// Derivative of [`Quaternion::from_tangent`], 4x3.
    pub fn from_tangent_jacobian(phi: &Vector3<f64>) -> Matrix4x3<f64> {
        let theta_sq = phi.norm_squared();
        let mut j = Matrix4x3::zeros();
        if theta_sq < 1e-10 {
            j.fixed_view_mut::<1, 3>(0, 0)
                .copy_from(&(-phi.transpose() / 4.0));
            j.fixed_view_mut::<3, 3>(1, 0).copy_from(
                &(0.5 * (1.0 - theta_sq / 48.0) * Matrix3::identity()
                    - phi * phi.transpose() / 24.0),
            );
            return j;
        }
        let theta = theta_sq.sqrt();
        let a = phi / theta;
        let (sh, ch) = (theta / 2.0).sin_cos();
        j.fixed_view_mut::<1, 3>(0, 0)
            .copy_from(&(-0.5 * sh * a.transpose()));
        j.fixed_view_mut::<3, 3>(1, 0).copy_from(
            &((sh / theta) * (Matrix3::identity() - a * a.transpose())
                + 0.5 * ch * a * a.transpose()),
        );
        j
    }

    /// Derivative of the rotated point `A(q) p` with respect to `q`, 3x4.
    /// Exact everywhere in R⁴ (the action is bilinear).
    pub fn rotate_jacobian(&self, p: &Vector3<f64>) -> Matrix3x4<f64> {
        let s = self.s;
        let v = self.v;
        let col0 = 2.0 * (s * p + v.cross(p));
        let block = 2.0
            * (v.dot(p) * Matrix3::identity() + v * p.transpose()
                - p * v.transpose()
                - s * hat(p));
        let mut j = Matrix3x4::zeros();
        j.fixed_view_mut::<3, 1>(0, 0).copy_from(&col0);
        j.fixed_view_mut::<3, 3>(0, 1).copy_from(&block);
        j
    }
}

/// Samples a rotation uniformly under the Haar measure: four standard
/// normals normalized into a unit quaternion.
pub fn sample_uniform_rotation<R: rand::Rng + ?Sized>(rng: &mut R) -> Rotation {
    loop {
        let q = Quaternion::new(
            rng.sample(rand_distr::StandardNormal),
            Vector3::new(
                rng.sample(rand_distr::StandardNormal),
                rng.sample(rand_distr::StandardNormal),
                rng.sample(rand_distr::StandardNormal),
            ),
        );
        if q.norm() > 1e-6 {
            return q.to_rotation();
        }
    }
}

fn first_nonzero(v: &Vector3<f64>) -> f64 {
    for i in 0..3 {
        if v[i] != 0.0 {
            return v[i];
        }
    }
    0.0
}

/// Hamilton product `q2 ⊗ q1 = L(q2) q1`, renormalized to guard long chains.
impl std::ops::Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, rhs: Quaternion) -> Quaternion {
        let s = self.s * rhs.s - self.v.dot(&rhs.v);
        let v = self.s * rhs.v + rhs.s * self.v + self.v.cross(&rhs.v);
        Quaternion::new(s, v)
            .normalized()
            .expect("quaternion product collapsed to zero")
    }
}
