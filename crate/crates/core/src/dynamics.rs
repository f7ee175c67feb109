//! Phase-space state and the first-order vector field of the rescaled
//! primal-dual system.
//!
//! With `z = (x, λ, w, η)` and `w = ẋ`, `η = λ̇` the flow reads
//!
//! ```text
//! ẋ = w
//! λ̇ = η
//! ẇ = −(α/t) w − δ(t) [∇f(x) + Aᵀ(λ + θtη) + βAᵀ(Ax − b)]
//! η̇ = −(α/t) η + δ(t) [A(x + θtw) − b]
//! ```

use alloc::vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::integrate::VectorField;
use crate::problem::ConstrainedProblem;
use crate::scaling::{SystemParams, TimeScaling};

/// A point `(t, x, λ, ẋ, λ̇)` of phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualState {
    pub t: f64,
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub vx: DVector<f64>,
    pub vlambda: DVector<f64>,
}

impl PrimalDualState {
    pub fn new(
        t: f64,
        x: DVector<f64>,
        lambda: DVector<f64>,
        vx: DVector<f64>,
        vlambda: DVector<f64>,
    ) -> Result<Self> {
        check_len("primal velocity", x.len(), vx.len())?;
        check_len("dual velocity", lambda.len(), vlambda.len())?;
        Ok(Self {
            t,
            x,
            lambda,
            vx,
            vlambda,
        })
    }

    /// The state at rest at `(x, λ)`.
    pub fn at_rest(t: f64, x: DVector<f64>, lambda: DVector<f64>) -> Self {
        let (n, m) = (x.len(), lambda.len());
        Self {
            t,
            x,
            lambda,
            vx: DVector::zeros(n),
            vlambda: DVector::zeros(m),
        }
    }

    pub fn check_dims(&self, problem: &ConstrainedProblem) -> Result<()> {
        check_len("state x", problem.n(), self.x.len())?;
        check_len("state λ", problem.m(), self.lambda.len())?;
        check_len("state ẋ", problem.n(), self.vx.len())?;
        check_len("state λ̇", problem.m(), self.vlambda.len())
    }

    /// Flat layout `[x, λ, ẋ, λ̇]` used by the integrators.
    pub fn to_flat(&self) -> DVector<f64> {
        let (n, m) = (self.x.len(), self.lambda.len());
        let mut y = DVector::zeros(2 * (n + m));
        y.rows_mut(0, n).copy_from(&self.x);
        y.rows_mut(n, m).copy_from(&self.lambda);
        y.rows_mut(n + m, n).copy_from(&self.vx);
        y.rows_mut(2 * n + m, m).copy_from(&self.vlambda);
        y
    }

    pub fn from_flat(t: f64, y: &[f64], n: usize, m: usize) -> Result<Self> {
        check_len("flat state", 2 * (n + m), y.len())?;
        Ok(Self {
            t,
            x: DVector::from_column_slice(&y[..n]),
            lambda: DVector::from_column_slice(&y[n..n + m]),
            vx: DVector::from_column_slice(&y[n + m..2 * n + m]),
            vlambda: DVector::from_column_slice(&y[2 * n + m..]),
        })
    }

    /// `‖(ẋ, λ̇)‖`.
    pub fn speed(&self) -> f64 {
        libm::sqrt(self.vx.norm_squared() + self.vlambda.norm_squared())
    }
}

/// Time derivative of a [`PrimalDualState`], in the same block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub dx: DVector<f64>,
    pub dlambda: DVector<f64>,
    pub dvx: DVector<f64>,
    pub dvlambda: DVector<f64>,
}

impl StateDerivative {
    pub fn norm(&self) -> f64 {
        libm::sqrt(
            self.dx.norm_squared()
                + self.dlambda.norm_squared()
                + self.dvx.norm_squared()
                + self.dvlambda.norm_squared(),
        )
    }
}

/// The rescaled primal-dual vector field bound to one problem and parameter
/// set.
#[derive(Debug, Clone, Copy)]
pub struct PrimalDualFlow<'a> {
    pub problem: &'a ConstrainedProblem,
    pub params: &'a SystemParams,
    pub scaling: &'a TimeScaling,
}

impl<'a> PrimalDualFlow<'a> {
    pub fn new(
        problem: &'a ConstrainedProblem,
        params: &'a SystemParams,
        scaling: &'a TimeScaling,
    ) -> Self {
        Self {
            problem,
            params,
            scaling,
        }
    }
}

impl VectorField for PrimalDualFlow<'_> {
    fn dim(&self) -> usize {
        2 * (self.problem.n() + self.problem.m())
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let (n, m) = (self.problem.n(), self.problem.m());
        let SystemParams {
            alpha, beta, theta, ..
        } = *self.params;
        let a = self.problem.a();
        let b = self.problem.b();
        let delta = self.scaling.delta(t);
        let damping = alpha / t;
        let ext = theta * t;

        let (x, rest) = y.split_at(n);
        let (lambda, rest) = rest.split_at(m);
        let (vx, vlambda) = rest.split_at(n);

        let (dx, rest) = dy.split_at_mut(n);
        let (dlambda, rest) = rest.split_at_mut(m);
        let (dvx, dvlambda) = rest.split_at_mut(n);

        dx.copy_from_slice(vx);
        dlambda.copy_from_slice(vlambda);

        // dvx holds ∇f(x) first, then the full acceleration
        self.problem.objective().gradient(x, dvx);

        // column-major m × n
        let a = a.as_slice();
        let b = b.as_slice();
        let (mut ax, mut aw) = ([0.0; 8], [0.0; 8]);
        let small = m <= 8;

        // dvλ holds λ + θtη + β(Ax − b) until the x-block has consumed it
        for i in 0..m {
            let (mut sx, mut sw) = (0.0, 0.0);
            for j in 0..n {
                sx += a[i + j * m] * x[j];
                sw += a[i + j * m] * vx[j];
            }
            if small {
                ax[i] = sx;
                aw[i] = sw;
            }
            dvlambda[i] = lambda[i] + ext * vlambda[i] + beta * (sx - b[i]);
        }
        for j in 0..n {
            let col = &a[j * m..(j + 1) * m];
            let mut at = 0.0;
            for i in 0..m {
                at += col[i] * dvlambda[i];
            }
            dvx[j] = -damping * vx[j] - delta * (dvx[j] + at);
        }
        for i in 0..m {
            let (sx, sw) = if small {
                (ax[i], aw[i])
            } else {
                let (mut sx, mut sw) = (0.0, 0.0);
                for j in 0..n {
                    sx += a[i + j * m] * x[j];
                    sw += a[i + j * m] * vx[j];
                }
                (sx, sw)
            };
            dvlambda[i] = -damping * vlambda[i] + delta * (sx - b[i] + ext * sw);
        }
    }

    fn jacobian(&self, t: f64, y: &[f64], jac: &mut DMatrix<f64>) {
        let (n, m) = (self.problem.n(), self.problem.m());
        let SystemParams {
            alpha, beta, theta, ..
        } = *self.params;
        let a = self.problem.a();
        let delta = self.scaling.delta(t);
        let damping = alpha / t;
        let ext = theta * t;

        let x = DVector::from_column_slice(&y[..n]);
        let hess = self
            .problem
            .hessian_f(&x)
            .unwrap_or_else(|_| DMatrix::zeros(n, n));
        let ata = a.tr_mul(a);

        jac.fill(0.0);
        let (ix, il, ivx, ivl) = (0, n, n + m, 2 * n + m);
        for k in 0..n {
            jac[(ix + k, ivx + k)] = 1.0;
            jac[(ivx + k, ivx + k)] = -damping;
        }
        for k in 0..m {
            jac[(il + k, ivl + k)] = 1.0;
            jac[(ivl + k, ivl + k)] = -damping;
        }
        for r in 0..n {
            for c in 0..n {
                jac[(ivx + r, ix + c)] = -delta * (hess[(r, c)] + beta * ata[(r, c)]);
            }
            for c in 0..m {
                jac[(ivx + r, il + c)] = -delta * a[(c, r)];
                jac[(ivx + r, ivl + c)] = -delta * ext * a[(c, r)];
            }
        }
        for r in 0..m {
            for c in 0..n {
                jac[(ivl + r, ix + c)] = delta * a[(r, c)];
                jac[(ivl + r, ivx + c)] = delta * ext * a[(r, c)];
            }
        }
    }
}

fn check_time(params: &SystemParams, t: f64) -> Result<()> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter { name: "t", value: t });
    }
    if t < params.t0 {
        return Err(Error::TimeBeforeStart { t, t0: params.t0 });
    }
    Ok(())
}

/// Evaluates the vector field at `state`, returning `(ẋ, λ̇, ẍ, λ̈)`.
pub fn rhs(
    problem: &ConstrainedProblem,
    params: &SystemParams,
    scaling: &TimeScaling,
    state: &PrimalDualState,
) -> Result<StateDerivative> {
    check_time(params, state.t)?;
    state.check_dims(problem)?;
    let flow = PrimalDualFlow::new(problem, params, scaling);
    let y = state.to_flat();
    let mut dy = vec![0.0; y.len()];
    flow.eval(state.t, y.as_slice(), &mut dy);
    if dy.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("vector field"));
    }
    let d = PrimalDualState::from_flat(state.t, &dy, problem.n(), problem.m())?;
    Ok(StateDerivative {
        dx: d.x,
        dlambda: d.lambda,
        dvx: d.vx,
        dvlambda: d.vlambda,
    })
}

/// Norm of the full derivative; zero exactly at rest at a saddle point.
pub fn equilibrium_residual(
    problem: &ConstrainedProblem,
    params: &SystemParams,
    scaling: &TimeScaling,
    state: &PrimalDualState,
) -> Result<f64> {
    Ok(rhs(problem, params, scaling, state)?.norm())
}
