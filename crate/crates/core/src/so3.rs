//! The SO(3) matrix Lie group.
//!
//! Rotations are stored as plain 3x3 matrices. Tangent vectors live in R^3 and
//! use the right-perturbation convention throughout: `R ⊕ φ = R · exp(φ∧)` and
//! `R2 ⊖ R1 = log(R1ᵀ R2)`, so a Jacobian `J` of `f` satisfies
//! `f(R ⊕ δ) ≈ f(R) ⊕ J δ`.
//!
//! Numerical conditioning gets explicit treatment in three places:
//! - `exp`/`log`/Jacobians switch to 2nd-order Taylor series below
//!   [`SMALL_ANGLE`] where the closed forms divide by ~θ.
//! - `log` switches to an axis extraction from the diagonal of `R + Rᵀ` inside
//!   [`NEAR_PI_BAND`] of θ = π, where `(R - Rᵀ)` loses the axis to
//!   cancellation. The angle there comes from `asin` of the off-diagonal
//!   magnitude, which is well conditioned exactly where `acos` of the trace is
//!   not.
//! - Every operation that returns a [`Rotation`] re-orthonormalizes via
//!   Gram-Schmidt once drift exceeds [`DRIFT_TOLERANCE`], so long composition
//!   chains (e.g. 10^4-step rollouts) stay on the manifold.

use std::fmt;

use nalgebra::{Matrix3, Vector3};

/// Below this angle (radians) the series expansions replace the closed forms.
pub const SMALL_ANGLE: f64 = 1e-5;

/// `log` uses the `R + Rᵀ` axis extraction for θ > π - NEAR_PI_BAND.
pub const NEAR_PI_BAND: f64 = 1e-3;

/// Orthonormality drift (Frobenius norm of `RᵀR - I`) above which results are
/// re-orthonormalized, and above which `Rotation::from_matrix` rejects input.
pub const DRIFT_TOLERANCE: f64 = 1e-9;

/// Maximum tolerated asymmetry (Frobenius norm of `M + Mᵀ`) in [`vee`].
pub const SKEW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum So3Error {
    /// `vee` was handed a matrix with `‖M + Mᵀ‖` above [`SKEW_TOLERANCE`].
    NotSkew { asymmetry: f64 },
    /// `Rotation::from_matrix` was handed a matrix that is not orthonormal
    /// with determinant +1 within [`DRIFT_TOLERANCE`].
    NotRotation { residual: f64 },
}

impl fmt::Display for So3Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            So3Error::NotSkew { asymmetry } => {
                write!(f, "matrix is not skew-symmetric (asymmetry {asymmetry:.3e})")
            }
            So3Error::NotRotation { residual } => {
                write!(f, "matrix is not a rotation (residual {residual:.3e})")
            }
        }
    }
}

impl std::error::Error for So3Error {}

/// An element of SO(3), kept orthonormal with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation {
    m: Matrix3<f64>,
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation { m: Matrix3::identity() }
    }

    /// Validates orthonormality and orientation before wrapping.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, So3Error> {
        let residual = (m.transpose() * m - Matrix3::identity()).norm();
        if residual > DRIFT_TOLERANCE || m.determinant() < 0.0 {
            return Err(So3Error::NotRotation { residual });
        }
        Ok(Rotation { m })
    }

    /// Wraps without validation. The caller vouches for `m ∈ SO(3)`.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation { m }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> Matrix3<f64> {
        self.m
    }

    /// The inverse rotation. For SO(3) this is the transpose.
    pub fn transpose(&self) -> Self {
        Rotation { m: self.m.transpose() }
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.m * v
    }

    /// Frobenius norm of `RᵀR - I`.
    pub fn orthonormality_residual(&self) -> f64 {
        (self.m.transpose() * self.m - Matrix3::identity()).norm()
    }

    /// Re-orthonormalizes `m` by Gram-Schmidt on the columns when drift
    /// exceeds [`DRIFT_TOLERANCE`]; cheap no-op otherwise.
    pub(crate) fn snapped(m: Matrix3<f64>) -> Self {
        let drift = (m.transpose() * m - Matrix3::identity()).norm();
        if drift <= DRIFT_TOLERANCE {
            return Rotation { m };
        }
        let a = m.column(0).normalize();
        let c1 = m.column(1).into_owned();
        let b = (c1 - a * a.dot(&c1)).normalize();
        let c = a.cross(&b);
        Rotation { m: Matrix3::from_columns(&[a, b, c]) }
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation::snapped(self.m * rhs.m)
    }
}

impl std::ops::Mul<&Rotation> for &Rotation {
    type Output = Rotation;

    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation::snapped(self.m * rhs.m)
    }
}

impl std::ops::Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;

    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.m * rhs
    }
}

/// Skew-symmetric matrix of `v`: `hat(v) w = v × w`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}

/// Inverse of [`hat`]. Rejects matrices that are not skew-symmetric within
/// [`SKEW_TOLERANCE`]; extraction is exact for true skew matrices.
pub fn vee(m: &Matrix3<f64>) -> Result<Vector3<f64>, So3Error> {
    let asymmetry = (m + m.transpose()).norm();
    if asymmetry > SKEW_TOLERANCE {
        return Err(So3Error::NotSkew { asymmetry });
    }
    Ok(Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]))
}

/// Unchecked `(M - Mᵀ)∨`-style extraction used internally by `log`.
fn vee_unchecked(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Exponential map: Rodrigues' formula
/// `exp(φ) = I + (sin θ / θ) φ∧ + ((1 - cos θ) / θ²) (φ∧)²`.
pub fn exp_so3(phi: &Vector3<f64>) -> Rotation {
    let theta_sq = phi.norm_squared();
    let w = hat(phi);
    let w2 = w * w;
    let m = if theta_sq < SMALL_ANGLE * SMALL_ANGLE {
        Matrix3::identity() + w + 0.5 * w2
    } else {
        let theta = theta_sq.sqrt();
        Matrix3::identity() + (theta.sin() / theta) * w + ((1.0 - theta.cos()) / theta_sq) * w2
    };
    Rotation::snapped(m)
}

/// Logarithm map, canonicalized to `‖φ‖ ≤ π`.
pub fn log_so3(r: &Rotation) -> Vector3<f64> {
    let m = r.matrix();
    let w = vee_unchecked(&(m - m.transpose())); // = 2 sin θ · axis
    let cos_theta = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    // The angle comes from atan2 rather than acos: near θ = π the trace is
    // at the flat end of the cosine, and an acos there poisons sin θ (and
    // with it the θ/(2 sin θ) scale) with an O(ε/δ²) relative error. The
    // skew part gives sin θ to full absolute precision.
    let sin_theta = (w.norm() / 2.0).min(1.0);
    let theta = sin_theta.atan2(cos_theta);

    if theta < SMALL_ANGLE {
        // θ/(2 sin θ) ≈ 1/2 (1 + θ²/6)
        return 0.5 * (1.0 + theta * theta / 6.0) * w;
    }
    if theta > std::f64::consts::PI - NEAR_PI_BAND {
        // Obtuse branch: recover θ from the off-diagonal magnitude (asin is
        // well conditioned here) and the axis from R + Rᵀ = 2 cos θ I +
        // 2 (1 - cos θ) a aᵀ, whose diagonal keeps full precision at θ = π.
        let sin_theta = (w.norm() / 2.0).clamp(0.0, 1.0);
        let theta = std::f64::consts::PI - sin_theta.asin();
        let c = theta.cos();
        let s = (m + m.transpose() - 2.0 * c * Matrix3::identity()) / (2.0 * (1.0 - c));
        let i = if s[(0, 0)] >= s[(1, 1)] && s[(0, 0)] >= s[(2, 2)] {
            0
        } else if s[(1, 1)] >= s[(2, 2)] {
            1
        } else {
            2
        };
        let mut axis = Vector3::new(s[(i, 0)], s[(i, 1)], s[(i, 2)]) / s[(i, i)].max(0.0).sqrt();
        axis.normalize_mut();
        // w = 2 sin θ · a with sin θ ≥ 0 fixes the sign; at θ = π exactly
        // (w = 0) both signs are valid antipodes.
        if axis.dot(&w) < 0.0 {
            axis = -axis;
        }
        return theta * axis;
    }
    (theta / (2.0 * sin_theta)) * w
}

/// Right plus: `R ⊕ φ = R · exp(φ)`.
pub fn oplus_right(r: &Rotation, phi: &Vector3<f64>) -> Rotation {
    r * &exp_so3(phi)
}

/// Left plus: `φ ⊕ R = exp(φ) · R`.
pub fn oplus_left(phi: &Vector3<f64>, r: &Rotation) -> Rotation {
    &exp_so3(phi) * r
}

/// Right minus: `R2 ⊖ R1 = log(R1ᵀ R2)`, the tangent at `R1` that reaches `R2`.
pub fn ominus_right(r2: &Rotation, r1: &Rotation) -> Vector3<f64> {
    log_so3(&(&r1.transpose() * r2))
}

/// Left minus: `R2 ⊖ R1 = log(R2 R1ᵀ)`, expressed in the global frame.
pub fn ominus_left(r2: &Rotation, r1: &Rotation) -> Vector3<f64> {
    log_so3(&(r2 * &r1.transpose()))
}

/// Adjoint of SO(3): `Ad_R = R`, satisfying `R exp(φ) = exp(Ad_R φ) R`.
pub fn adjoint(r: &Rotation) -> Matrix3<f64> {
    *r.matrix()
}

/// Right Jacobian of the exponential map:
/// `J_r(φ) = I - ((1 - cos θ)/θ²) φ∧ + ((θ - sin θ)/θ³) (φ∧)²`,
/// satisfying `exp(φ + δ) ≈ exp(φ) exp(J_r(φ) δ)`.
pub fn right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta_sq = phi.norm_squared();
    let w = hat(phi);
    let w2 = w * w;
    if theta_sq < SMALL_ANGLE * SMALL_ANGLE {
        return Matrix3::identity() - 0.5 * w + w2 / 6.0;
    }
    let theta = theta_sq.sqrt();
    Matrix3::identity() - ((1.0 - theta.cos()) / theta_sq) * w
        + ((theta - theta.sin()) / (theta_sq * theta)) * w2
}

/// Inverse of the right Jacobian, in closed form:
/// `J_r⁻¹(φ) = I + φ∧/2 + (1/θ² - cos(θ/2)/(2θ sin(θ/2))) (φ∧)²`.
///
/// The half-angle form of the last coefficient stays finite through θ = π
/// (the naive `(1 + cos θ)/(2θ sin θ)` is 0/0 there).
pub fn right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta_sq = phi.norm_squared();
    let w = hat(phi);
    let w2 = w * w;
    if theta_sq < SMALL_ANGLE * SMALL_ANGLE {
        return Matrix3::identity() + 0.5 * w + w2 / 12.0;
    }
    let theta = theta_sq.sqrt();
    let half = theta / 2.0;
    let coeff = 1.0 / theta_sq - half.cos() / (2.0 * theta * half.sin());
    Matrix3::identity() + 0.5 * w + coeff * w2
}

/// Left Jacobian: the sign-flipped series, `J_l(φ) = J_r(φ)ᵀ = J_r(-φ)`,
/// satisfying `exp(φ + δ) ≈ exp(J_l(φ) δ) exp(φ)`.
pub fn left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta_sq = phi.norm_squared();
    let w = hat(phi);
    let w2 = w * w;
    if theta_sq < SMALL_ANGLE * SMALL_ANGLE {
        return Matrix3::identity() + 0.5 * w + w2 / 6.0;
    }
    let theta = theta_sq.sqrt();
    Matrix3::identity() + ((1.0 - theta.cos()) / theta_sq) * w
        + ((theta - theta.sin()) / (theta_sq * theta)) * w2
}

/// Finite-difference validation of a manifold Jacobian.
///
/// Returns `max_i ‖(f(R ⊕ ε e_i) ⊖ f(R)) / ε - J e_i‖` over the three tangent
/// basis directions, with right ⊕/⊖. A correct Jacobian scores O(ε) (forward
/// differences), so `eps = 1e-6` against a 1e-5 tolerance is the usual pairing.
pub fn manifold_derivative_check<F>(f: F, jacobian: &Matrix3<f64>, at: &Rotation, eps: f64) -> f64
where
    F: Fn(&Rotation) -> Rotation,
{
    let f0 = f(at);
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        let mut e = Vector3::zeros();
        e[i] = eps;
        let diff = ominus_right(&f(&oplus_right(at, &e)), &f0) / eps;
        worst = worst.max((diff - jacobian.column(i)).norm());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOLERANCE: f64 = 1e-12;

    fn random_tangent(rng: &mut ChaCha8Rng, max_angle: f64) -> Vector3<f64> {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n < 1e-12 {
            return Vector3::zeros();
        }
        v / n * rng.gen_range(0.0..max_angle)
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
        exp_so3(&random_tangent(rng, std::f64::consts::PI - 1e-3))
    }

    #[test]
    fn hat_is_skew_and_matches_cross_product() {
        let v = Vector3::new(0.3, -1.2, 2.5);
        let w = Vector3::new(-0.7, 0.1, 0.9);
        let h = hat(&v);
        assert!((h + h.transpose()).norm() == 0.0);
        assert!((h * w - v.cross(&w)).norm() < TOLERANCE);
    }

    #[test]
    fn vee_inverts_hat_exactly() {
        let v = Vector3::new(std::f64::consts::E, -0.25, 1e-11);
        assert_eq!(vee(&hat(&v)).unwrap(), v);
    }

    #[test]
    fn vee_rejects_non_skew() {
        let m = Matrix3::identity();
        match vee(&m) {
            Err(So3Error::NotSkew { asymmetry }) => assert!(asymmetry > 1.0),
            other => panic!("expected NotSkew, got {other:?}"),
        }
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let r = exp_so3(&Vector3::zeros());
        assert_eq!(r, Rotation::identity());
    }

    #[test]
    fn exp_of_principal_axis_matches_elementary_rotation() {
        let a = 0.83_f64;
        let r = exp_so3(&(a * Vector3::x()));
        let expected = Matrix3::new(
            1.0,
            0.0,
            0.0,
            0.0,
            a.cos(),
            -a.sin(),
            0.0,
            a.sin(),
            a.cos(),
        );
        assert!((r.matrix() - expected).norm() < TOLERANCE);
    }

    #[test]
    fn log_small_angle_branch() {
        let phi = Vector3::new(1e-9, -2e-9, 5e-10);
        let back = log_so3(&exp_so3(&phi));
        assert!((back - phi).norm() < 1e-18);
    }

    #[test]
    fn log_near_pi_branch_roundtrips() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let axis = random_tangent(&mut rng, 1.0).normalize();
            let theta = std::f64::consts::PI - rng.gen_range(1e-9..1e-3);
            let phi = theta * axis;
            let back = log_so3(&exp_so3(&phi));
            assert!(
                (back - phi).norm() < 1e-10,
                "roundtrip failed at theta={theta}: err={}",
                (back - phi).norm()
            );
        }
    }

    #[test]
    fn log_at_exactly_pi_returns_valid_antipode() {
        for axis in [Vector3::x(), Vector3::y(), Vector3::z()] {
            let r = exp_so3(&(std::f64::consts::PI * axis));
            let phi = log_so3(&r);
            assert!((phi.norm() - std::f64::consts::PI).abs() < 1e-9);
            // Either antipode is acceptable; exp must reproduce R.
            assert!((exp_so3(&phi).matrix() - r.matrix()).norm() < 1e-9);
        }
    }

    #[test]
    fn log_output_is_canonical() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let r = random_rotation(&mut rng);
            assert!(log_so3(&r).norm() <= std::f64::consts::PI + 1e-12);
        }
    }

    #[test]
    fn oplus_ominus_right_are_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let r = random_rotation(&mut rng);
            let phi = random_tangent(&mut rng, 3.0);
            let back = ominus_right(&oplus_right(&r, &phi), &r);
            assert!((back - phi).norm() < 1e-10, "err={}", (back - phi).norm());
        }
    }

    #[test]
    fn oplus_ominus_left_are_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let r = random_rotation(&mut rng);
            let phi = random_tangent(&mut rng, 3.0);
            let back = ominus_left(&oplus_left(&phi, &r), &r);
            assert!((back - phi).norm() < 1e-10);
        }
    }

    #[test]
    fn adjoint_swaps_perturbation_side() {
        // R ⊕ δ = (Ad_R δ) ⊕ R
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..1000 {
            let r = random_rotation(&mut rng);
            let phi = random_tangent(&mut rng, 2.0);
            let lhs = oplus_right(&r, &phi);
            let rhs = oplus_left(&(adjoint(&r) * phi), &r);
            assert!((lhs.matrix() - rhs.matrix()).norm() < TOLERANCE);
        }
    }

    #[test]
    fn composition_stays_orthonormal_over_long_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut r = Rotation::identity();
        for _ in 0..10_000 {
            r = oplus_right(&r, &random_tangent(&mut rng, 0.1));
        }
        assert!(r.orthonormality_residual() < 1e-9);
    }

    #[test]
    fn from_matrix_rejects_drifted_input() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = 1.0 + 1e-6;
        assert!(matches!(
            Rotation::from_matrix(m),
            Err(So3Error::NotRotation { .. })
        ));
        // Reflections (det = -1) are orthonormal but not rotations.
        let refl = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Rotation::from_matrix(refl).is_err());
    }

    #[test]
    fn right_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let eps = 1e-6;
        for _ in 0..200 {
            let phi = random_tangent(&mut rng, 3.0);
            let jr = right_jacobian(&phi);
            let mut worst: f64 = 0.0;
            for i in 0..3 {
                let mut e = Vector3::zeros();
                e[i] = eps;
                let diff = ominus_right(&exp_so3(&(phi + e)), &exp_so3(&phi)) / eps;
                worst = worst.max((diff - jr.column(i)).norm());
            }
            assert!(worst < 1e-5, "J_r FD mismatch {worst}");
        }
    }

    #[test]
    fn left_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let eps = 1e-6;
        for _ in 0..200 {
            let phi = random_tangent(&mut rng, 3.0);
            let jl = left_jacobian(&phi);
            let mut worst: f64 = 0.0;
            for i in 0..3 {
                let mut e = Vector3::zeros();
                e[i] = eps;
                let diff = ominus_left(&exp_so3(&(phi + e)), &exp_so3(&phi)) / eps;
                worst = worst.max((diff - jl.column(i)).norm());
            }
            assert!(worst < 1e-5, "J_l FD mismatch {worst}");
        }
    }

    #[test]
    fn left_jacobian_is_right_jacobian_of_negated_argument() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..500 {
            let phi = random_tangent(&mut rng, 3.0);
            assert!((left_jacobian(&phi) - right_jacobian(&-phi)).norm() < TOLERANCE);
            assert!((left_jacobian(&phi) - right_jacobian(&phi).transpose()).norm() < TOLERANCE);
        }
    }

    #[test]
    fn right_jacobian_inverse_is_exact_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..500 {
            // Stay clear of θ = 2π where J_r is genuinely singular; the
            // canonical domain ‖φ‖ ≤ π is what the solvers use.
            let phi = random_tangent(&mut rng, std::f64::consts::PI);
            let prod = right_jacobian(&phi) * right_jacobian_inv(&phi);
            assert!((prod - Matrix3::identity()).norm() < 1e-10);
        }
    }

    #[test]
    fn right_jacobian_fixes_its_own_axis() {
        let phi = Vector3::new(0.4, -1.1, 0.6);
        assert!((right_jacobian(&phi) * phi - phi).norm() < TOLERANCE);
        assert!((right_jacobian_inv(&phi) * phi - phi).norm() < TOLERANCE);
    }

    #[test]
    fn derivative_check_accepts_identity_map_and_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let q = random_rotation(&mut rng);
        let r = random_rotation(&mut rng);
        // Left multiplication by a constant has J = I.
        let err = manifold_derivative_check(|x| &q * x, &Matrix3::identity(), &r, 1e-6);
        assert!(err < 1e-5, "left-mul J=I failed: {err}");
        // Transpose has J = -Ad(R).
        let err = manifold_derivative_check(|x| x.transpose(), &-adjoint(&r), &r, 1e-6);
        assert!(err < 1e-5, "transpose J=-Ad failed: {err}");
        // A wrong Jacobian must be flagged.
        let err = manifold_derivative_check(|x| x.transpose(), &adjoint(&r), &r, 1e-6);
        assert!(err > 1e-2);
    }

    #[test]
    fn jacobian_chain_rule_composes() {
        // g(f(R)) with f(R) = R Q and g(R) = Rᵀ: J_g∘f = J_g(f(R)) · J_f(R)
        // = -Ad(RQ) · Ad(Qᵀ) = -Ad(R).
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let q = random_rotation(&mut rng);
        let r = random_rotation(&mut rng);
        let composite = |x: &Rotation| (x * &q).transpose();
        let chained = -adjoint(&(&r * &q)) * adjoint(&q.transpose());
        let err = manifold_derivative_check(composite, &chained, &r, 1e-6);
        assert!(err < 1e-5, "chain rule failed: {err}");
    }

    proptest! {
        #[test]
        fn exp_log_roundtrip(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
                             scale in 0.0f64..1.0) {
            let v = Vector3::new(x, y, z);
            prop_assume!(v.norm() > 1e-6);
            let phi = v / v.norm() * scale * (std::f64::consts::PI - 1e-6);
            let back = log_so3(&exp_so3(&phi));
            prop_assert!((back - phi).norm() < 1e-10);
        }

        #[test]
        fn exp_output_is_orthonormal(x in -10.0f64..10.0, y in -10.0f64..10.0,
                                     z in -10.0f64..10.0) {
            let r = exp_so3(&Vector3::new(x, y, z));
            prop_assert!(r.orthonormality_residual() < 1e-12);
            prop_assert!((r.matrix().determinant() - 1.0).abs() < 1e-12);
        }
    }
}
