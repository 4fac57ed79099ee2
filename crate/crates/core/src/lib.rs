//! Orientation representations for robotics, and the machinery to compare them.
//!
//! The crate is organized around a plain rotation-matrix core:
//!
//! - [`so3`]: the SO(3) matrix Lie group: hat/vee, exp/log, the ⊕/⊖
//!   perturbation operators, adjoint, and the right Jacobian family.
//! - [`representations`]: Euler angle conventions, axis-angle, and a
//!   scalar-first quaternion with the L/R/H matrix algebra and the attitude
//!   Jacobian.
//! - [`distances`]: rotation distances (Frobenius, geodesic, chordal) and the
//!   SVD projection onto SO(3).
//! - [`wahba`]: Wahba's problem: instance generation, the SVD closed-form
//!   solution, and Gauss-Newton solvers over six parameterizations.
//! - [`dynamics`]: rotating-frame and quadrotor dynamics with semi-implicit
//!   integration, analytic linearizations, and a finite-difference oracle.
//! - [`ilqr`]: an iterative LQR solver over manifold-valued states with box
//!   control constraints, plus per-representation models and task costs.
//! - [`bench`]: deterministic benchmark runners producing convergence traces.

pub mod bench;
pub mod distances;
pub mod dynamics;
pub mod ilqr;
pub mod representations;
pub mod so3;
pub mod trace;
pub mod wahba;
