//! Certified primal-dual solutions `(x*, λ*)` of `∇f(x) + Aᵀλ = 0, Ax = b`.
//!
//! Quadratic objectives are solved by one dense solve of the KKT system
//! `[H Aᵀ; A 0]` (plus a refinement step). Other objectives use damped
//! Newton on the KKT map with Armijo backtracking on its squared norm.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{ConstrainedProblem, SaddlePoint};

const MAX_ITERATIONS: usize = 200;
const STAGNATION_WINDOW: usize = 20;
const STAGNATION_DECREASE: f64 = 1e-3;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 30;

/// Numerical rank of `a` from its singular values.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let cutoff = smax * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    sv.iter().filter(|&&s| s > cutoff).count()
}

fn kkt_map(problem: &ConstrainedProblem, x: &DVector<f64>, lambda: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, m) = (problem.n(), problem.m());
    let (stationarity, feasibility) = problem.kkt_operator(x, lambda)?;
    let mut out = DVector::zeros(n + m);
    out.rows_mut(0, n).copy_from(&stationarity);
    // Ax − b, which keeps the Jacobian symmetric
    out.rows_mut(n, m).copy_from(&(-feasibility));
    Ok(out)
}

fn kkt_jacobian(problem: &ConstrainedProblem, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (n, m) = (problem.n(), problem.m());
    let mut jac = DMatrix::zeros(n + m, n + m);
    jac.view_mut((0, 0), (n, n)).copy_from(&problem.hessian_f(x)?);
    jac.view_mut((0, n), (n, m)).copy_from(&problem.a().transpose());
    jac.view_mut((n, 0), (m, n)).copy_from(problem.a());
    Ok(jac)
}

fn residual(problem: &ConstrainedProblem, x: &DVector<f64>, lambda: &DVector<f64>) -> Result<f64> {
    let r = problem.kkt_residual(x, lambda)?;
    if r.is_finite() {
        Ok(r)
    } else {
        Err(Error::NonFinite("KKT residual"))
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "tol",
            value: tol,
        })
    }
}

/// Computes a saddle point whose KKT residual
/// `‖∇f(x*) + Aᵀλ*‖ + ‖Ax* − b‖` is at most `tol`.
pub fn solve_saddle_point(problem: &ConstrainedProblem, tol: f64) -> Result<SaddlePoint> {
    check_tol(tol)?;
    let (n, m) = (problem.n(), problem.m());
    let rank = numerical_rank(problem.a());
    if rank < m {
        return Err(Error::RankDeficient { rank, rows: m });
    }

    let mut x = DVector::zeros(n);
    let mut lambda = DVector::zeros(m);
    let mut res = residual(problem, &x, &lambda)?;
    let mut history = alloc::vec::Vec::with_capacity(MAX_ITERATIONS);
    history.push(res);
    let quadratic = problem.objective().is_quadratic();

    for iteration in 0..MAX_ITERATIONS {
        if res <= tol {
            break;
        }
        let rhs = -kkt_map(problem, &x, &lambda)?;
        let step = kkt_jacobian(problem, &x)?
            .lu()
            .solve(&rhs)
            .ok_or(Error::NewtonStagnation {
                iterations: iteration,
                residual: res,
            })?;
        let dx = step.rows(0, n).into_owned();
        let dl = step.rows(n, m).into_owned();

        if quadratic {
            // the model is exact: take the full step
            x += &dx;
            lambda += &dl;
            res = residual(problem, &x, &lambda)?;
        } else {
            let merit = kkt_map(problem, &x, &lambda)?.norm_squared();
            let mut s = 1.0;
            let mut accepted = false;
            for _ in 0..=MAX_HALVINGS {
                let xt = &x + &dx * s;
                let lt = &lambda + &dl * s;
                let rt = kkt_map(problem, &xt, &lt)?.norm_squared();
                if rt.is_finite() && rt <= (1.0 - 2.0 * ARMIJO_C * s) * merit {
                    x = xt;
                    lambda = lt;
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            if !accepted {
                return Err(Error::NewtonStagnation {
                    iterations: iteration + 1,
                    residual: res,
                });
            }
            res = residual(problem, &x, &lambda)?;
        }
        history.push(res);
        let k = history.len();
        if k > STAGNATION_WINDOW && res > tol {
            let before = history[k - 1 - STAGNATION_WINDOW];
            if before - res < STAGNATION_DECREASE * before {
                return Err(Error::NewtonStagnation {
                    iterations: k - 1,
                    residual: res,
                });
            }
        }
    }
    if res > tol {
        return Err(Error::NewtonStagnation {
            iterations: history.len() - 1,
            residual: res,
        });
    }
    Ok(SaddlePoint {
        x_star: x,
        lambda_star: lambda,
        kkt_residual: res,
    })
}

/// `true` iff the recomputed KKT residual of `candidate` is at most `tol`.
pub fn certify(problem: &ConstrainedProblem, candidate: &SaddlePoint, tol: f64) -> Result<bool> {
    check_tol(tol)?;
    Ok(problem.kkt_residual(&candidate.x_star, &candidate.lambda_star)? <= tol)
}
