//! Linearly constrained convex problems `min f(x) s.t. Ax = b`, their
//! Lagrangian oracles and the KKT operator.

use alloc::string::ToString;
use alloc::sync::Arc;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Smooth convex objective `f: ℝⁿ → ℝ`.
///
/// The slice-based methods are the hot path of the vector field and must not
/// allocate in tight loops beyond what the implementation needs.
pub trait Objective: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes `∇f(x)` into `out`.
    fn gradient(&self, x: &[f64], out: &mut [f64]);

    /// Writes `∇²f(x)` into `out` and returns `true`, or returns `false` when
    /// no analytic Hessian is available.
    fn hessian(&self, _x: &[f64], _out: &mut DMatrix<f64>) -> bool {
        false
    }

    /// `true` when the Hessian is constant, so one Newton step on the KKT
    /// system is exact.
    fn is_quadratic(&self) -> bool {
        false
    }

    /// Bregman divergence `f(x) − f(y) − ⟨∇f(y), x − y⟩`. The default
    /// evaluates it as written, which loses all accuracy once it falls
    /// below `ε·|f|`; implementations override it where they can.
    fn bregman(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut g = alloc::vec![0.0; y.len()];
        self.gradient(y, &mut g);
        let lin: f64 = g.iter().zip(x.iter().zip(y)).map(|(gi, (xi, yi))| gi * (xi - yi)).sum();
        self.value(x) - self.value(y) - lin
    }
}

/// `f(x) = ½ xᵀHx + gᵀx + c` with symmetric positive semidefinite `H`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    constant: f64,
}

impl Quadratic {
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>, constant: f64) -> Result<Self> {
        check_len("quadratic hessian columns", hessian.nrows(), hessian.ncols())?;
        check_len("quadratic linear term", hessian.nrows(), linear.len())?;
        // only the symmetric part enters ½xᵀHx
        let hessian = (&hessian + hessian.transpose()) * 0.5;
        Ok(Self {
            hessian,
            linear,
            constant,
        })
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let mut quad = 0.0;
        for i in 0..n {
            let row: f64 = x.iter().enumerate().map(|(j, xj)| self.hessian[(i, j)] * xj).sum();
            quad += x[i] * row;
        }
        let lin: f64 = self.linear.iter().zip(x).map(|(g, xi)| g * xi).sum();
        0.5 * quad + lin + self.constant
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        // H is symmetric, so its columns are its rows
        let h = self.hessian.as_slice();
        for i in 0..n {
            let row = &h[i * n..(i + 1) * n];
            let mut acc = self.linear[i];
            for j in 0..n {
                acc += row[j] * x[j];
            }
            out[i] = acc;
        }
    }

    fn hessian(&self, _x: &[f64], out: &mut DMatrix<f64>) -> bool {
        out.copy_from(&self.hessian);
        true
    }

    fn is_quadratic(&self) -> bool {
        true
    }

    fn bregman(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim();
        let h = self.hessian.as_slice();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += h[i * n + j] * (x[j] - y[j]);
            }
            acc += (x[i] - y[i]) * row;
        }
        0.5 * acc
    }
}

/// `f(x) = log(1 + exp(−x₁ − x₂)) + x₃² + x₄²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogisticExample;

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

/// `softplus(z) − softplus(z0) − logistic(z0)(z − z0)`, by its Taylor
/// series when `z` is close to `z0`.
fn softplus_bregman(z: f64, z0: f64) -> f64 {
    let d = z - z0;
    if d.abs() >= 1e-2 {
        return softplus(z) - softplus(z0) - logistic(z0) * d;
    }
    let s = logistic(z0);
    let w = s * (1.0 - s);
    let d3 = w * (1.0 - 2.0 * s);
    let d4 = w * (1.0 - 6.0 * s + 6.0 * s * s);
    let d5 = w * (1.0 - 14.0 * s + 36.0 * s * s - 24.0 * s * s * s);
    d * d * (w / 2.0 + d * (d3 / 6.0 + d * (d4 / 24.0 + d * d5 / 120.0)))
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

impl Objective for LogisticExample {
    fn dim(&self) -> usize {
        4
    }

    fn value(&self, x: &[f64]) -> f64 {
        softplus(-x[0] - x[1]) + x[2] * x[2] + x[3] * x[3]
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let s = logistic(-x[0] - x[1]);
        out[0] = -s;
        out[1] = -s;
        out[2] = 2.0 * x[2];
        out[3] = 2.0 * x[3];
    }

    fn hessian(&self, x: &[f64], out: &mut DMatrix<f64>) -> bool {
        let s = logistic(-x[0] - x[1]);
        let w = s * (1.0 - s);
        out.fill(0.0);
        out[(0, 0)] = w;
        out[(0, 1)] = w;
        out[(1, 0)] = w;
        out[(1, 1)] = w;
        out[(2, 2)] = 2.0;
        out[(3, 3)] = 2.0;
        true
    }

    fn bregman(&self, x: &[f64], y: &[f64]) -> f64 {
        let (d3, d4) = (x[2] - y[2], x[3] - y[3]);
        softplus_bregman(-x[0] - x[1], -y[0] - y[1]) + d3 * d3 + d4 * d4
    }
}

/// The two problems of the reference experiments. Both share the
/// constraints `x₁ − x₂ − x₃ = 0`, `x₂ − x₄ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinProblem {
    /// `(x₁−1)² + (x₂−1)² + x₃² + x₄²`, strongly convex.
    QuadraticExample,
    /// `log(1+e^(−x₁−x₂)) + x₃² + x₄²`, convex but not strongly convex.
    LogisticExample,
}

impl BuiltinProblem {
    pub const ALL: [BuiltinProblem; 2] = [Self::QuadraticExample, Self::LogisticExample];

    pub fn name(self) -> &'static str {
        match self {
            Self::QuadraticExample => "quadratic_example",
            Self::LogisticExample => "logistic_example",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::UnknownProblem(name.to_string()))
    }

    pub fn build(self) -> ConstrainedProblem {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, -1.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let b = DVector::zeros(2);
        let (objective, lipschitz): (Arc<dyn Objective>, f64) = match self {
            Self::QuadraticExample => {
                let q = Quadratic::new(
                    DMatrix::from_diagonal_element(4, 4, 2.0),
                    DVector::from_row_slice(&[-2.0, -2.0, 0.0, 0.0]),
                    2.0,
                )
                .expect("consistent builtin dimensions");
                (Arc::new(q), 2.0)
            }
            // logistic block Hessian norm ≤ 1/2, quadratic block 2
            Self::LogisticExample => (Arc::new(LogisticExample), 2.5),
        };
        ConstrainedProblem::new(objective, a, b, Some(lipschitz))
            .expect("consistent builtin dimensions")
    }
}

/// Looks up a builtin problem by name.
pub fn builtin_problem(name: &str) -> Result<ConstrainedProblem> {
    BuiltinProblem::from_name(name).map(BuiltinProblem::build)
}

/// `min f(x)` subject to `Ax = b`, with `A` dense `m × n`.
#[derive(Clone)]
pub struct ConstrainedProblem {
    objective: Arc<dyn Objective>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    lipschitz_bound: Option<f64>,
}

impl fmt::Debug for ConstrainedProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstrainedProblem")
            .field("n", &self.n())
            .field("m", &self.m())
            .field("objective", &self.objective)
            .field("lipschitz_bound", &self.lipschitz_bound)
            .finish()
    }
}

impl ConstrainedProblem {
    pub fn new(
        objective: Arc<dyn Objective>,
        a: DMatrix<f64>,
        b: DVector<f64>,
        lipschitz_bound: Option<f64>,
    ) -> Result<Self> {
        check_len("constraint matrix columns", objective.dim(), a.ncols())?;
        check_len("right-hand side b", a.nrows(), b.len())?;
        if let Some(l) = lipschitz_bound {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "lipschitz_bound",
                    value: l,
                });
            }
        }
        Ok(Self {
            objective,
            a,
            b,
            lipschitz_bound,
        })
    }

    /// Primal dimension.
    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// Dual dimension (number of equality constraints).
    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn lipschitz_bound(&self) -> Option<f64> {
        self.lipschitz_bound
    }

    pub fn objective(&self) -> &dyn Objective {
        &*self.objective
    }

    fn check_x(&self, x: &DVector<f64>) -> Result<()> {
        check_len("primal vector x", self.n(), x.len())
    }

    fn check_lambda(&self, lambda: &DVector<f64>) -> Result<()> {
        check_len("dual vector λ", self.m(), lambda.len())
    }

    pub fn eval_f(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_x(x)?;
        Ok(self.objective.value(x.as_slice()))
    }

    /// `f(x) − f(y) − ⟨∇f(y), x − y⟩`.
    pub fn bregman_f(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        check_len("x", self.n(), x.len())?;
        check_len("y", self.n(), y.len())?;
        Ok(self.objective.bregman(x.as_slice(), y.as_slice()))
    }

    pub fn grad_f(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_x(x)?;
        let mut g = DVector::zeros(self.n());
        self.objective.gradient(x.as_slice(), g.as_mut_slice());
        Ok(g)
    }

    /// `∇²f(x)`, analytic when the objective provides it and central
    /// differences of `∇f` otherwise.
    pub fn hessian_f(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_x(x)?;
        let n = self.n();
        let mut h = DMatrix::zeros(n, n);
        if self.objective.hessian(x.as_slice(), &mut h) {
            return Ok(h);
        }
        let step = fd_step(x);
        let mut probe = x.clone();
        let mut gp = DVector::zeros(n);
        let mut gm = DVector::zeros(n);
        for j in 0..n {
            probe[j] = x[j] + step;
            self.objective.gradient(probe.as_slice(), gp.as_mut_slice());
            probe[j] = x[j] - step;
            self.objective.gradient(probe.as_slice(), gm.as_mut_slice());
            probe[j] = x[j];
            for i in 0..n {
                h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
            }
        }
        // symmetrize the difference quotient
        let ht = h.transpose();
        Ok((h + ht) * 0.5)
    }

    /// `Ax − b`.
    pub fn feasibility_residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_x(x)?;
        Ok(&self.a * x - &self.b)
    }

    /// `L(x, λ) = f(x) + ⟨λ, Ax − b⟩`.
    pub fn lagrangian(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> Result<f64> {
        self.check_lambda(lambda)?;
        let r = self.feasibility_residual(x)?;
        Ok(self.objective.value(x.as_slice()) + lambda.dot(&r))
    }

    /// `L_β(x, λ) = L(x, λ) + (β/2)‖Ax − b‖²`.
    pub fn aug_lagrangian(&self, x: &DVector<f64>, lambda: &DVector<f64>, beta: f64) -> Result<f64> {
        check_beta(beta)?;
        self.check_lambda(lambda)?;
        let r = self.feasibility_residual(x)?;
        Ok(self.objective.value(x.as_slice()) + lambda.dot(&r) + 0.5 * beta * r.norm_squared())
    }

    /// `∇ₓL_β(x, λ) = ∇f(x) + Aᵀλ + βAᵀ(Ax − b)`.
    pub fn grad_x_auglag(
        &self,
        x: &DVector<f64>,
        lambda: &DVector<f64>,
        beta: f64,
    ) -> Result<DVector<f64>> {
        check_beta(beta)?;
        self.check_lambda(lambda)?;
        let r = self.feasibility_residual(x)?;
        let g = self.grad_f(x)?;
        Ok(g + self.a.tr_mul(&(lambda + r * beta)))
    }

    /// `T_L(x, λ) = (∇f(x) + Aᵀλ, b − Ax)`; its zeros are the saddle points.
    pub fn kkt_operator(
        &self,
        x: &DVector<f64>,
        lambda: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check_lambda(lambda)?;
        let g = self.grad_f(x)?;
        let stationarity = g + self.a.tr_mul(lambda);
        let feasibility = &self.b - &self.a * x;
        Ok((stationarity, feasibility))
    }

    /// `‖∇f(x) + Aᵀλ‖ + ‖Ax − b‖`.
    pub fn kkt_residual(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> Result<f64> {
        let (s, r) = self.kkt_operator(x, lambda)?;
        Ok(s.norm() + r.norm())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta >= 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "beta",
            value: beta,
        })
    }
}

/// Central-difference step `1e-6 · max(1, ‖x‖)`.
pub fn fd_step(x: &DVector<f64>) -> f64 {
    1e-6 * x.norm().max(1.0)
}

/// Central-difference gradient of an arbitrary scalar function.
pub fn central_difference_gradient<F>(func: F, x: &DVector<f64>) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let step = fd_step(x);
    let mut probe = x.clone();
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            probe[i] = x[i] + step;
            let fp = func(&probe);
            probe[i] = x[i] - step;
            let fm = func(&probe);
            probe[i] = x[i];
            (fp - fm) / (2.0 * step)
        }),
    )
}

/// A primal-dual pair `(x*, λ*)` together with its KKT residual
/// `‖∇f(x*) + Aᵀλ*‖ + ‖Ax* − b‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddlePoint {
    pub x_star: DVector<f64>,
    pub lambda_star: DVector<f64>,
    pub kkt_residual: f64,
}

impl SaddlePoint {
    /// Wraps a candidate pair, computing its residual.
    pub fn from_pair(
        problem: &ConstrainedProblem,
        x_star: DVector<f64>,
        lambda_star: DVector<f64>,
    ) -> Result<Self> {
        let kkt_residual = problem.kkt_residual(&x_star, &lambda_star)?;
        Ok(Self {
            x_star,
            lambda_star,
            kkt_residual,
        })
    }

    /// `f* = f(x*)`.
    pub fn optimal_value(&self, problem: &ConstrainedProblem) -> f64 {
        problem.objective().value(self.x_star.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn close(a: &DVector<f64>, b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn saddle_pair() -> (DVector<f64>, DVector<f64>) {
        (v(&[0.8, 0.6, 0.2, 0.6]), v(&[0.4, 1.2]))
    }

    #[test]
    fn quadratic_values() {
        let p = builtin_problem("quadratic_example").unwrap();
        assert!((p.eval_f(&saddle_pair().0).unwrap() - 0.6).abs() < 1e-14);
        assert_eq!(p.eval_f(&v(&[1.0, 1.0, 0.0, 0.0])).unwrap(), 0.0);
        assert!((p.eval_f(&v(&[0.5; 4])).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn quadratic_gradients() {
        let p = builtin_problem("quadratic_example").unwrap();
        let g = p.grad_f(&saddle_pair().0).unwrap();
        assert!(close(&g, &[-0.4, -0.8, 0.4, 1.2], 1e-14));
        let g = p.grad_f(&v(&[1.0, 1.0, 0.0, 0.0])).unwrap();
        assert!(close(&g, &[0.0; 4], 0.0));
        let g = p.grad_f(&v(&[0.5; 4])).unwrap();
        assert!(close(&g, &[-1.0, -1.0, 1.0, 1.0], 1e-14));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = builtin_problem("quadratic_example").unwrap();
        assert!(matches!(
            p.eval_f(&v(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { expected: 4, found: 2, .. })
        ));
        assert!(p.lagrangian(&v(&[0.0; 4]), &v(&[1.0])).is_err());
        assert!(p.feasibility_residual(&v(&[0.0; 5])).is_err());
    }

    #[test]
    fn lagrangian_examples() {
        let p = builtin_problem("quadratic_example").unwrap();
        let (xs, ls) = saddle_pair();
        assert!((p.lagrangian(&xs, &v(&[-3.0, 7.0])).unwrap() - 0.6).abs() < 1e-14);
        assert!((p.lagrangian(&v(&[0.5; 4]), &ls).unwrap() - 0.8).abs() < 1e-14);
        let x = v(&[0.1, -0.3, 2.0, 0.7]);
        assert_eq!(p.lagrangian(&x, &v(&[0.0, 0.0])).unwrap(), p.eval_f(&x).unwrap());
    }

    #[test]
    fn augmented_lagrangian_examples() {
        let p = builtin_problem("quadratic_example").unwrap();
        let al = p.aug_lagrangian(&v(&[0.5; 4]), &v(&[0.2, 0.2]), 10.0).unwrap();
        assert!((al - 2.15).abs() < 1e-13);
        let (xs, _) = saddle_pair();
        let al = p.aug_lagrangian(&xs, &v(&[5.0, -2.0]), 3.0).unwrap();
        assert!((al - p.eval_f(&xs).unwrap()).abs() < 1e-14);
        let x = v(&[0.3, 0.1, -0.4, 0.9]);
        let l = v(&[0.7, -1.1]);
        assert_eq!(
            p.aug_lagrangian(&x, &l, 0.0).unwrap(),
            p.lagrangian(&x, &l).unwrap()
        );
        assert!(matches!(
            p.aug_lagrangian(&x, &l, -1.0),
            Err(Error::InvalidParameter { name: "beta", .. })
        ));
    }

    #[test]
    fn grad_x_auglag_examples() {
        let p = builtin_problem("quadratic_example").unwrap();
        let (xs, ls) = saddle_pair();
        let g = p.grad_x_auglag(&xs, &ls, 10.0).unwrap();
        assert!(g.norm() < 1e-14);
        let l = v(&[0.2 + 0.5 / 6.0, 0.2 + 0.5 / 6.0]);
        let g = p.grad_x_auglag(&v(&[0.5; 4]), &l, 10.0).unwrap();
        assert!(close(&g, &[-5.716667, 4.0, 5.716667, 0.716667], 1e-5));
        let x = v(&[0.3, 0.1, -0.4, 0.9]);
        let g = p.grad_x_auglag(&x, &v(&[0.0, 0.0]), 0.0).unwrap();
        assert_eq!(g, p.grad_f(&x).unwrap());
    }

    #[test]
    fn feasibility_and_kkt_operator() {
        let p = builtin_problem("quadratic_example").unwrap();
        let (xs, ls) = saddle_pair();
        assert!(p.feasibility_residual(&xs).unwrap().norm() < 1e-15);
        let r = p.feasibility_residual(&v(&[0.5; 4])).unwrap();
        assert!(close(&r, &[-0.5, 0.0], 1e-15));
        let x = v(&[0.3, 0.1, -0.4, 0.9]);
        let b = p.a() * &x;
        let shifted = ConstrainedProblem::new(
            Arc::new(LogisticExample),
            p.a().clone(),
            b,
            None,
        )
        .unwrap();
        assert_eq!(shifted.feasibility_residual(&x).unwrap().norm(), 0.0);

        let (s, f) = p.kkt_operator(&xs, &ls).unwrap();
        assert!(s.norm() <= 1e-12 && f.norm() <= 1e-12);
        let (s, f) = p.kkt_operator(&v(&[0.5; 4]), &v(&[0.2, 0.2])).unwrap();
        assert!(close(&s, &[-0.8, -1.0, 0.8, 0.8], 1e-14));
        assert!(close(&f, &[0.5, 0.0], 1e-15));
        let (s, f) = p.kkt_operator(&x, &v(&[0.0, 0.0])).unwrap();
        assert_eq!(s, p.grad_f(&x).unwrap());
        assert_eq!(f, -p.feasibility_residual(&x).unwrap());
    }

    #[test]
    fn builtins() {
        let q = builtin_problem("quadratic_example").unwrap();
        assert_eq!((q.n(), q.m()), (4, 2));
        assert_eq!(q.a().row(0).iter().copied().collect::<vec::Vec<_>>(), vec![1.0, -1.0, -1.0, 0.0]);
        assert_eq!(q.lipschitz_bound(), Some(2.0));
        let l = builtin_problem("logistic_example").unwrap();
        assert_eq!((l.n(), l.m()), (4, 2));
        assert_eq!(l.b().as_slice(), &[0.0, 0.0]);
        assert_eq!(l.lipschitz_bound(), Some(2.5));
        assert!(matches!(builtin_problem("rosenbrock"), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn constructor_rejects_inconsistent_shapes() {
        let a = DMatrix::zeros(2, 3);
        let r = ConstrainedProblem::new(Arc::new(LogisticExample), a, DVector::zeros(2), None);
        assert!(r.is_err());
        let a = DMatrix::zeros(2, 4);
        let r = ConstrainedProblem::new(Arc::new(LogisticExample), a, DVector::zeros(3), None);
        assert!(r.is_err());
        let a = DMatrix::zeros(2, 4);
        let r = ConstrainedProblem::new(Arc::new(LogisticExample), a, DVector::zeros(2), Some(0.0));
        assert!(r.is_err());
    }

    #[test]
    fn logistic_is_stable_for_large_arguments() {
        let p = builtin_problem("logistic_example").unwrap();
        let f = p.eval_f(&v(&[-400.0, -400.0, 0.0, 0.0])).unwrap();
        assert!((f - 800.0).abs() < 1e-9);
        let f = p.eval_f(&v(&[400.0, 400.0, 0.0, 0.0])).unwrap();
        assert!((0.0..1e-300).contains(&f));
        let g = p.grad_f(&v(&[-400.0, -400.0, 0.0, 0.0])).unwrap();
        assert!(g.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn bregman_divergences() {
        for name in ["quadratic_example", "logistic_example"] {
            let p = builtin_problem(name).unwrap();
            let y = v(&[0.7, 0.3, -0.2, 0.4]);
            // far apart the naive formula is accurate
            let x = v(&[0.1, 0.9, 0.5, -0.3]);
            let naive = p.eval_f(&x).unwrap() - p.eval_f(&y).unwrap() - p.grad_f(&y).unwrap().dot(&(&x - &y));
            assert!((p.bregman_f(&x, &y).unwrap() - naive).abs() < 1e-14, "{name}");
            // close together it follows ½ dᵀ∇²f d
            let d = v(&[1e-9, -2e-9, 3e-9, 1e-9]);
            let h = p.hessian_f(&y).unwrap();
            let quad = 0.5 * d.dot(&(&h * &d));
            let b = p.bregman_f(&(&y + &d), &y).unwrap();
            assert!((b / quad - 1.0).abs() < 1e-6, "{name}: {b} vs {quad}");
        }
        // the series and the direct branch agree where they meet
        for z0 in [-3.0, 0.0, 2.5] {
            let (a, b) = (softplus_bregman(z0 + 0.0099, z0), softplus_bregman(z0 + 0.0101, z0));
            assert!((a / b - (0.0099f64 / 0.0101).powi(2)).abs() < 1e-3);
        }
    }

    #[test]
    fn finite_difference_hessian_fallback() {
        #[derive(Debug)]
        struct NoHessian;
        impl Objective for NoHessian {
            fn dim(&self) -> usize {
                4
            }
            fn value(&self, x: &[f64]) -> f64 {
                LogisticExample.value(x)
            }
            fn gradient(&self, x: &[f64], out: &mut [f64]) {
                LogisticExample.gradient(x, out)
            }
        }
        let a = DMatrix::zeros(1, 4);
        let p = ConstrainedProblem::new(Arc::new(NoHessian), a.clone(), DVector::zeros(1), None)
            .unwrap();
        let q = ConstrainedProblem::new(Arc::new(LogisticExample), a, DVector::zeros(1), None)
            .unwrap();
        let x = v(&[0.2, -0.7, 1.0, 3.0]);
        let diff = p.hessian_f(&x).unwrap() - q.hessian_f(&x).unwrap();
        assert!(diff.amax() < 1e-7);
    }

    #[test]
    fn sampled_oracle_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for problem in BuiltinProblem::ALL.map(BuiltinProblem::build) {
            for _ in 0..200 {
                let x = DVector::from_fn(4, |_, _| rng.gen_range(-3.0..3.0));
                let lam = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
                let beta = rng.gen_range(0.0..20.0);

                let al = problem.aug_lagrangian(&x, &lam, beta).unwrap();
                let l = problem.lagrangian(&x, &lam).unwrap();
                let pen = 0.5 * beta * problem.feasibility_residual(&x).unwrap().norm_squared();
                assert!((al - l - pen).abs() <= 1e-12 * al.abs().max(1.0));

                let fd = central_difference_gradient(
                    |y| problem.aug_lagrangian(y, &lam, beta).unwrap(),
                    &x,
                );
                let g = problem.grad_x_auglag(&x, &lam, beta).unwrap();
                assert!((&fd - &g).norm() <= 1e-6 * g.norm().max(1.0));
            }
        }
    }
}
