//! Rotation distance metrics and the least-squares projection onto SO(3).
//!
//! Three metrics with different tolerance for invalid inputs:
//! [`dist_naive`] compares raw matrices (the candidate need not be a
//! rotation), [`dist_chordal`] projects the candidate onto SO(3) first, and
//! [`dist_geodesic`] is the intrinsic angle between two valid rotations.

use nalgebra::{Matrix3, Vector3};

use crate::so3::{log_so3, Rotation};

/// σ₂ + σ₃ at or below this (relative to max(1, σ₁)) marks the projection
/// as non-unique.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;

/// Projection of an arbitrary matrix onto SO(3). `degenerate` flags inputs
/// whose two smallest singular values vanish: the returned rotation is still
/// a valid minimizer, just not the only one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub rotation: Rotation,
    pub degenerate: bool,
}

/// Frobenius norm of the element-wise difference. Neither argument has to be
/// a valid rotation, which is exactly why this metric can be misleading for
/// off-manifold iterates.
pub fn dist_naive(rd: &Matrix3<f64>, rp: &Matrix3<f64>) -> f64 {
    (rd - rp).norm()
}

/// Intrinsic (geodesic) distance: the angle of the relative rotation,
/// `‖log(Rpᵀ Rd)‖ ∈ [0, π]`. Symmetric and bi-invariant.
pub fn dist_geodesic(rd: &Rotation, rp: &Rotation) -> f64 {
    log_so3(&(&rp.transpose() * rd)).norm()
}

/// Nearest rotation to `m` in the Frobenius sense: `U diag(1, 1, det(UVᵀ)) Vᵀ`
/// from the SVD `m = U Σ Vᵀ`.
pub fn project_so3(m: &Matrix3<f64>) -> Projection {
    let svd = m.svd(true, true);
    let u = svd.u.expect("SVD of a 3x3 matrix always yields U");
    let v_t = svd.v_t.expect("SVD of a 3x3 matrix always yields Vᵀ");
    let sigma = svd.singular_values;
    let sign = if u.determinant() * v_t.determinant() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let rotation =
        Rotation::snapped(u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign)) * v_t);
    let degenerate = sigma[1] + sigma[2] <= DEGENERACY_TOLERANCE * sigma[0].max(1.0);
    Projection { rotation, degenerate }
}

/// Frobenius distance after projecting the candidate onto SO(3). Equal to
/// [`dist_naive`] whenever `m` is already a valid rotation.
pub fn dist_chordal(rd: &Rotation, m: &Matrix3<f64>) -> f64 {
    dist_naive(&rd.matrix(), &project_so3(m).rotation.matrix())
}
