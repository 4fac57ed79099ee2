//! Projected-Newton solver for box-constrained quadratic programs,
//! `min ½uᵀHu + gᵀu` subject to `lo ≤ u ≤ hi`, used by the trajectory
//! optimizer's backward pass to respect control limits.
//!
//! The active set is re-estimated every iteration from the gradient sign at
//! the bounds, a Newton step is taken in the free subspace, and a projected
//! backtracking line search guarantees monotone descent.

use nalgebra::{DMatrix, DVector};

pub const KKT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone)]
pub struct BoxQpResult {
    pub u: DVector<f64>,
    /// Coordinates not pinned at a bound in the final iteration; feedback
    /// gains are only meaningful on these.
    pub free: Vec<bool>,
    pub converged: bool,
    pub iterations: usize,
}

/// Componentwise KKT residual: interior coordinates must have zero gradient,
/// coordinates at a bound must have the gradient pointing out of the box.
pub fn kkt_residual(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    u: &DVector<f64>,
) -> f64 {
    let grad = h * u + g;
    let mut residual: f64 = 0.0;
    for i in 0..u.len() {
        let r = if u[i] <= lower[i] {
            grad[i].min(0.0)
        } else if u[i] >= upper[i] {
            grad[i].max(0.0)
        } else {
            grad[i]
        };
        residual += r * r;
    }
    residual.sqrt()
}

fn clamp(u: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(u.len(), |i, _| u[i].clamp(lower[i], upper[i]))
}

/// Solves the box QP starting from `u_init` (clamped into the box first).
/// `h` must be positive definite. Hitting the iteration cap returns the best
/// iterate with `converged: false`.
pub fn boxqp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    u_init: &DVector<f64>,
) -> BoxQpResult {
    let m = g.len();
    assert_eq!(h.nrows(), m);
    assert_eq!(h.ncols(), m);
    assert_eq!(lower.len(), m);
    assert_eq!(upper.len(), m);
    for i in 0..m {
        assert!(lower[i] <= upper[i], "bound {i} inverted");
    }

    let objective = |u: &DVector<f64>| 0.5 * (u.transpose() * h * u)[(0, 0)] + g.dot(u);
    let mut u = clamp(u_init, lower, upper);
    let mut free = vec![true; m];

    for iter in 0..MAX_ITERATIONS {
        let grad = h * &u + g;
        for i in 0..m {
            free[i] = !((u[i] <= lower[i] && grad[i] > 0.0)
                || (u[i] >= upper[i] && grad[i] < 0.0));
        }
        if kkt_residual(h, g, lower, upper, &u) < KKT_TOLERANCE {
            debug_assert!(free_set_gradient_norm(h, g, &u, &free) < 1e-6);
            return BoxQpResult { u, free, converged: true, iterations: iter };
        }

        let free_idx: Vec<usize> = (0..m).filter(|&i| free[i]).collect();
        let nf = free_idx.len();
        if nf == 0 {
            // All coordinates clamped with outward gradients: KKT holds, the
            // residual check above just has not caught up numerically.
            return BoxQpResult { u, free, converged: true, iterations: iter };
        }

        // Newton target on the free subspace with clamped coordinates fixed.
        let h_ff = DMatrix::from_fn(nf, nf, |a, b| h[(free_idx[a], free_idx[b])]);
        let mut rhs = DVector::from_fn(nf, |a, _| -g[free_idx[a]]);
        for a in 0..nf {
            for i in 0..m {
                if !free[i] {
                    rhs[a] -= h[(free_idx[a], i)] * u[i];
                }
            }
        }
        let chol = h_ff
            .cholesky()
            .expect("free-subspace Hessian must be positive definite");
        let target = chol.solve(&rhs);

        let mut direction = DVector::zeros(m);
        for a in 0..nf {
            direction[free_idx[a]] = target[a] - u[free_idx[a]];
        }
        let slope: f64 = (0..m).map(|i| grad[i] * direction[i]).sum();

        // Projected backtracking: Newton directions are descent directions,
        // so this terminates with an improving point.
        let f0 = objective(&u);
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..16 {
            let candidate = clamp(&(&u + alpha * &direction), lower, upper);
            if objective(&candidate) <= f0 + 1e-4 * alpha * slope.min(0.0) {
                u = candidate;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            return BoxQpResult { u, free, converged: false, iterations: iter };
        }
    }
    let converged = kkt_residual(h, g, lower, upper, &u) < KKT_TOLERANCE;
    BoxQpResult { u, free, converged, iterations: MAX_ITERATIONS }
}

/// Gradient norm restricted to a free set; zero iff `u` solves the
/// equality-constrained Newton system on those coordinates.
fn free_set_gradient_norm(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    u: &DVector<f64>,
    free: &[bool],
) -> f64 {
    let grad = h * u + g;
    (0..u.len())
        .filter(|&i| free[i])
        .map(|i| grad[i] * grad[i])
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(m, m) * 0.1
    }

    #[test]
    fn interior_solution_returned_exactly() {
        let h = DMatrix::from_diagonal(&DVector::from_column_slice(&[2.0, 4.0]));
        let g = DVector::from_column_slice(&[-1.0, 2.0]);
        let lower = DVector::from_element(2, -10.0);
        let upper = DVector::from_element(2, 10.0);
        let res = boxqp(&h, &g, &lower, &upper, &DVector::zeros(2));
        assert!(res.converged);
        // Unconstrained optimum -H⁻¹g = [0.5, -0.5] is interior.
        assert!((res.u[0] - 0.5).abs() < 1e-12);
        assert!((res.u[1] + 0.5).abs() < 1e-12);
        assert!(res.free.iter().all(|&f| f));
    }

    #[test]
    fn one_dimensional_clamp() {
        // min u² - 10u on [0, 1]: unconstrained optimum 5, clamped to 1 with
        // gradient 2*1-10 = -8 < 0 pointing out of the box at the upper bound.
        let h = DMatrix::from_element(1, 1, 2.0);
        let g = DVector::from_element(1, -10.0);
        let res = boxqp(
            &h,
            &g,
            &DVector::from_element(1, 0.0),
            &DVector::from_element(1, 1.0),
            &DVector::zeros(1),
        );
        assert!(res.converged);
        assert_eq!(res.u[0], 1.0);
        assert!(!res.free[0]);
    }

    #[test]
    fn random_problems_satisfy_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..500 {
            let h = random_spd(&mut rng, 3);
            let g = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let lower = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..0.0));
            let upper = DVector::from_fn(3, |_, _| rng.gen_range(0.0..1.0));
            let init = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let res = boxqp(&h, &g, &lower, &upper, &init);
            assert!(res.converged);
            assert!(kkt_residual(&h, &g, &lower, &upper, &res.u) < KKT_TOLERANCE);
        }
    }

    #[test]
    fn matches_brute_force_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for _ in 0..20 {
            let h = random_spd(&mut rng, 3);
            let g = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let lower = DVector::from_element(3, -1.0);
            let upper = DVector::from_element(3, 1.0);
            let res = boxqp(&h, &g, &lower, &upper, &DVector::zeros(3));
            let objective =
                |u: &DVector<f64>| 0.5 * (u.transpose() * &h * u)[(0, 0)] + g.dot(u);
            let n = 40;
            let mut best = f64::INFINITY;
            for a in 0..=n {
                for b in 0..=n {
                    for c in 0..=n {
                        let u = DVector::from_column_slice(&[
                            -1.0 + 2.0 * a as f64 / n as f64,
                            -1.0 + 2.0 * b as f64 / n as f64,
                            -1.0 + 2.0 * c as f64 / n as f64,
                        ]);
                        best = best.min(objective(&u));
                    }
                }
            }
            // The solver must do at least as well as the best grid point up
            // to the grid's own resolution.
            let spacing = 2.0 / n as f64;
            assert!(objective(&res.u) <= best + spacing);
        }
    }

    #[test]
    fn infinite_bounds_reduce_to_newton() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..100 {
            let h = random_spd(&mut rng, 4);
            let g = DVector::from_fn(4, |_, _| rng.gen_range(-2.0..2.0));
            let lower = DVector::from_element(4, f64::NEG_INFINITY);
            let upper = DVector::from_element(4, f64::INFINITY);
            let res = boxqp(&h, &g, &lower, &upper, &DVector::zeros(4));
            let newton = h.clone().cholesky().unwrap().solve(&(-&g));
            assert!(res.converged);
            assert!((res.u - newton).norm() < 1e-8);
        }
    }
}
