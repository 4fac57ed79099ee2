//! Cost models for the trajectory optimizers.
//!
//! Quadratic costs serve the Euclidean oracle problems. The frame-reach
//! cost penalizes the terminal orientation in each chart's own squared
//! parameter distance (that distance is part of what distinguishes the
//! parameterizations). The flip cost tracks a reference attitude with the
//! geodesic angle for every chart, so its values are directly comparable
//! across parameterizations.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector4};

use crate::representations::Quaternion;
use crate::so3::{
    exp_so3, log_so3, ominus_right, right_jacobian, right_jacobian_inv, Rotation,
};

use super::models::{
    euler_zyx, euler_zyx_rate_matrix, OrientedState, QuadIlqrState, RotationParam,
};
use super::{CostFunction, StageExpansion, TerminalExpansion};

/// Running cost `½(xᵀQx + uᵀRu)` with terminal `½xᵀQ_f x`.
#[derive(Debug, Clone)]
pub struct QuadraticCost {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub q_f: DMatrix<f64>,
}

impl QuadraticCost {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, q_f: DMatrix<f64>) -> Self {
        assert!(q.is_square() && r.is_square() && q_f.is_square());
        assert_eq!(q.nrows(), q_f.nrows());
        QuadraticCost { q, r, q_f }
    }
}

impl CostFunction<DVector<f64>> for QuadraticCost {
    fn stage(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        0.5 * ((x.transpose() * &self.q * x)[(0, 0)] + (u.transpose() * &self.r * u)[(0, 0)])
    }

    fn terminal(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.q_f * x)[(0, 0)]
    }

    fn stage_expansion(&self, _k: usize, x: &DVector<f64>, u: &DVector<f64>) -> StageExpansion {
        StageExpansion {
            lx: &self.q * x,
            lu: &self.r * u,
            lxx: self.q.clone(),
            luu: self.r.clone(),
            lux: DMatrix::zeros(self.r.nrows(), self.q.nrows()),
        }
    }

    fn terminal_expansion(&self, x: &DVector<f64>) -> TerminalExpansion {
        TerminalExpansion { lx: &self.q_f * x, lxx: self.q_f.clone() }
    }
}

/// Gradient and Gauss-Newton Hessian of `w·‖log(R_refᵀR)‖²` in the chart of
/// `param`, sized `attitude_dim`. The right-tangent gradient is exactly
/// `2w·φ` because `J_r(φ)ᵀφ = φ`; other charts chain through their rate
/// matrices.
fn geodesic_expansion(
    param: RotationParam,
    r: &Rotation,
    q: &Quaternion,
    r_ref: &Rotation,
    w: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let phi = ominus_right(r, r_ref);
    let g_t = 2.0 * w * phi;
    let jri = right_jacobian_inv(&phi);
    let h_t = 2.0 * w * jri.transpose() * jri;
    match param {
        RotationParam::So3 | RotationParam::QuatAttitude => (
            DVector::from_column_slice(g_t.as_slice()),
            DMatrix::from_column_slice(3, 3, h_t.as_slice()),
        ),
        RotationParam::AxisAngle => {
            let e = right_jacobian(&log_so3(r));
            let g = e.transpose() * g_t;
            let h = e.transpose() * h_t * e;
            (
                DVector::from_column_slice(g.as_slice()),
                DMatrix::from_column_slice(3, 3, h.as_slice()),
            )
        }
        RotationParam::EulerZyx => {
            let e = euler_zyx_rate_matrix(&euler_zyx(r));
            let g = e.transpose() * g_t;
            let h = e.transpose() * h_t * e;
            (
                DVector::from_column_slice(g.as_slice()),
                DMatrix::from_column_slice(3, 3, h.as_slice()),
            )
        }
        RotationParam::QuatNaive => {
            let m = 2.0 * q.attitude_jacobian().transpose();
            let g = m.transpose() * g_t;
            let h = m.transpose() * h_t * m;
            (
                DVector::from_column_slice(g.as_slice()),
                DMatrix::from_column_slice(4, 4, h.as_slice()),
            )
        }
    }
}

/// Reach cost for the frame task: running control effort only, terminal
/// orientation error in the chart's own squared parameter distance plus a
/// terminal spin penalty.
#[derive(Debug, Clone)]
pub struct FrameCost {
    pub param: RotationParam,
    pub goal: Rotation,
    pub w_u: f64,
    pub w_r: f64,
    pub w_omega: f64,
    goal_q: Vector4<f64>,
    goal_aa: Vector3<f64>,
    goal_euler: Vector3<f64>,
}

impl FrameCost {
    pub fn new(param: RotationParam, goal: Rotation, w_u: f64, w_r: f64, w_omega: f64) -> Self {
        FrameCost {
            param,
            goal,
            w_u,
            w_r,
            w_omega,
            goal_q: Quaternion::from_rotation(&goal).as_vector(),
            goal_aa: log_so3(&goal),
            goal_euler: euler_zyx(&goal),
        }
    }

    pub fn with_default_weights(param: RotationParam, goal: Rotation) -> Self {
        Self::new(param, goal, 1e-2, 10.0, 1.0)
    }

    /// Squared parameter distance of the chart to the goal orientation.
    fn attitude_cost(&self, x: &OrientedState) -> f64 {
        match self.param {
            RotationParam::So3 | RotationParam::QuatAttitude => {
                ominus_right(&x.frame.r, &self.goal).norm_squared()
            }
            RotationParam::AxisAngle => (log_so3(&x.frame.r) - self.goal_aa).norm_squared(),
            RotationParam::EulerZyx => {
                (euler_zyx(&x.frame.r) - self.goal_euler).norm_squared()
            }
            RotationParam::QuatNaive => (x.q.as_vector() - self.goal_q).norm_squared(),
        }
    }

    fn attitude_expansion(&self, x: &OrientedState) -> (DVector<f64>, DMatrix<f64>) {
        match self.param {
            RotationParam::So3 | RotationParam::QuatAttitude => {
                geodesic_expansion(self.param, &x.frame.r, &x.q, &self.goal, self.w_r)
            }
            RotationParam::AxisAngle => {
                let d = log_so3(&x.frame.r) - self.goal_aa;
                (
                    DVector::from_column_slice((2.0 * self.w_r * d).as_slice()),
                    DMatrix::identity(3, 3) * (2.0 * self.w_r),
                )
            }
            RotationParam::EulerZyx => {
                let d = euler_zyx(&x.frame.r) - self.goal_euler;
                (
                    DVector::from_column_slice((2.0 * self.w_r * d).as_slice()),
                    DMatrix::identity(3, 3) * (2.0 * self.w_r),
                )
            }
            RotationParam::QuatNaive => {
                let d = x.q.as_vector() - self.goal_q;
                (
                    DVector::from_column_slice((2.0 * self.w_r * d).as_slice()),
                    DMatrix::identity(4, 4) * (2.0 * self.w_r),
                )
            }
        }
    }
}

impl CostFunction<OrientedState> for FrameCost {
    fn stage(&self, _k: usize, _x: &OrientedState, u: &DVector<f64>) -> f64 {
        self.w_u * u.norm_squared()
    }

    fn terminal(&self, x: &OrientedState) -> f64 {
        self.w_r * self.attitude_cost(x) + self.w_omega * x.frame.omega.norm_squared()
    }

    fn stage_expansion(&self, _k: usize, _x: &OrientedState, u: &DVector<f64>) -> StageExpansion {
        let n = self.param.attitude_dim() + 3;
        StageExpansion {
            lx: DVector::zeros(n),
            lu: 2.0 * self.w_u * u,
            lxx: DMatrix::zeros(n, n),
            luu: DMatrix::identity(3, 3) * (2.0 * self.w_u),
            lux: DMatrix::zeros(3, n),
        }
    }

    fn terminal_expansion(&self, x: &OrientedState) -> TerminalExpansion {
        let att = self.param.attitude_dim();
        let n = att + 3;
        let (g_att, h_att) = self.attitude_expansion(x);
        let mut lx = DVector::zeros(n);
        lx.rows_mut(0, att).copy_from(&g_att);
        lx.rows_mut(att, 3)
            .copy_from(&(2.0 * self.w_omega * x.frame.omega));
        let mut lxx = DMatrix::zeros(n, n);
        lxx.view_mut((0, 0), (att, att)).copy_from(&h_att);
        lxx.view_mut((att, att), (3, 3))
            .copy_from(&(Matrix3::identity() * (2.0 * self.w_omega)));
        TerminalExpansion { lx, lxx }
    }
}

/// Flip cost for the quadrotor: tracks a full-roll attitude reference with
/// the geodesic distance (every chart sees the same cost values), penalizes
/// control effort, and pulls the terminal state back to a goal position and
/// level attitude.
#[derive(Debug, Clone)]
pub struct FlipCost {
    pub param: RotationParam,
    pub w_r: f64,
    pub w_u: f64,
    pub w_p: f64,
    pub p_goal: Vector3<f64>,
    refs: Vec<Rotation>,
}

impl FlipCost {
    /// The reference completes a 2π roll about body x over `horizon` steps
    /// of `dt` seconds.
    pub fn new(
        param: RotationParam,
        horizon: usize,
        dt: f64,
        w_r: f64,
        w_u: f64,
        w_p: f64,
        p_goal: Vector3<f64>,
    ) -> Self {
        assert!(horizon >= 1);
        let t_total = horizon as f64 * dt;
        let refs = (0..=horizon)
            .map(|k| exp_so3(&(Vector3::x() * (TAU * (k as f64 * dt) / t_total))))
            .collect();
        FlipCost { param, w_r, w_u, w_p, p_goal, refs }
    }

    pub fn with_default_weights(param: RotationParam, horizon: usize, dt: f64) -> Self {
        Self::new(param, horizon, dt, 10.0, 1e-3, 100.0, Vector3::zeros())
    }

    /// Attitude reference at step `k` (clamped to the terminal reference).
    pub fn reference(&self, k: usize) -> &Rotation {
        &self.refs[k.min(self.refs.len() - 1)]
    }
}

impl CostFunction<QuadIlqrState> for FlipCost {
    fn stage(&self, k: usize, x: &QuadIlqrState, u: &DVector<f64>) -> f64 {
        let angle = ominus_right(&x.quad.r, self.reference(k)).norm_squared();
        self.w_r * angle + self.w_u * u.norm_squared()
    }

    fn terminal(&self, x: &QuadIlqrState) -> f64 {
        let angle = ominus_right(&x.quad.r, &Rotation::identity()).norm_squared();
        self.w_p * (x.quad.p - self.p_goal).norm_squared() + self.w_r * angle
    }

    fn stage_expansion(&self, k: usize, x: &QuadIlqrState, u: &DVector<f64>) -> StageExpansion {
        let att = self.param.attitude_dim();
        let n = att + 9;
        let (g_att, h_att) =
            geodesic_expansion(self.param, &x.quad.r, &x.q, self.reference(k), self.w_r);
        let mut lx = DVector::zeros(n);
        lx.rows_mut(3, att).copy_from(&g_att);
        let mut lxx = DMatrix::zeros(n, n);
        lxx.view_mut((3, 3), (att, att)).copy_from(&h_att);
        StageExpansion {
            lx,
            lu: 2.0 * self.w_u * u,
            lxx,
            luu: DMatrix::identity(4, 4) * (2.0 * self.w_u),
            lux: DMatrix::zeros(4, n),
        }
    }

    fn terminal_expansion(&self, x: &QuadIlqrState) -> TerminalExpansion {
        let att = self.param.attitude_dim();
        let n = att + 9;
        let (g_att, h_att) = geodesic_expansion(
            self.param,
            &x.quad.r,
            &x.q,
            &Rotation::identity(),
            self.w_r,
        );
        let mut lx = DVector::zeros(n);
        lx.rows_mut(0, 3)
            .copy_from(&(2.0 * self.w_p * (x.quad.p - self.p_goal)));
        lx.rows_mut(3, att).copy_from(&g_att);
        let mut lxx = DMatrix::zeros(n, n);
        lxx.view_mut((0, 0), (3, 3))
            .copy_from(&(Matrix3::identity() * (2.0 * self.w_p)));
        lxx.view_mut((3, 3), (att, att)).copy_from(&h_att);
        TerminalExpansion { lx, lxx }
    }
}
