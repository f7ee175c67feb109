//! Numerical integration of the flow.
//!
//! The integrator is the explicit Dormand–Prince 5(4) pair with PI step
//! control and a fourth-order continuous extension for sampling. The
//! velocity coupling `δ(t)θtA` rotates `(ẋ, λ̇)` at a rate growing like
//! `t·δ(t)`, and the rotation is part of the exact solution, so fast-growing
//! `δ` makes runs expensive. A run whose step count is bound to exceed the
//! budget is refused before the first step.
//!
//! A classical fixed-step RK4 serves as a reference for cross-checks.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::dynamics::{PrimalDualFlow, PrimalDualState};
use crate::error::{check_len, Error, Result};
use crate::problem::ConstrainedProblem;
use crate::scaling::{SystemParams, TimeScaling};

/// Right-hand side of an autonomous or non-autonomous system `y' = F(t, y)`.
pub trait VectorField {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]);

    /// `∂F/∂y`. Defaults to central differences.
    fn jacobian(&self, t: f64, y: &[f64], jac: &mut DMatrix<f64>) {
        *jac = finite_difference_jacobian(self, t, y);
    }
}

/// Wraps a closure `(t, y, dy)` as a [`VectorField`].
#[derive(Debug, Clone, Copy)]
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64])> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        (self.f)(t, y, dy)
    }
}

pub fn finite_difference_jacobian<F: VectorField + ?Sized>(
    field: &F,
    t: f64,
    y: &[f64],
) -> DMatrix<f64> {
    let n = field.dim();
    let mut jac = DMatrix::zeros(n, n);
    let mut probe = y.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for j in 0..n {
        let step = 1e-7 * y[j].abs().max(1.0);
        probe[j] = y[j] + step;
        field.eval(t, &probe, &mut fp);
        probe[j] = y[j] - step;
        field.eval(t, &probe, &mut fm);
        probe[j] = y[j];
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h0: 1e-4,
            h_max: 1.0,
            max_steps: 20_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, value })
            }
        };
        positive("rtol", self.rtol)?;
        positive("atol", self.atol)?;
        positive("h0", self.h0)?;
        if !(self.h_max > 0.0) {
            return Err(Error::InvalidParameter {
                name: "h_max",
                value: self.h_max,
            });
        }
        if self.h0 > self.h_max {
            return Err(Error::InvalidParameter {
                name: "h0",
                value: self.h0,
            });
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter {
                name: "max_steps",
                value: 0.0,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ReachedTEnd,
    StepBudgetExhausted,
    /// The step size fell below `1e-14 · t`.
    StepUnderflow,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ReachedTEnd => "reached_t_end",
            Self::StepBudgetExhausted => "step_budget_exhausted",
            Self::StepUnderflow => "step_underflow",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntegrationStats {
    /// Lower bound on the number of steps from the spectral radius of the
    /// Jacobian along the initial state.
    pub estimated_min_steps: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub evaluations: usize,
    pub jacobians: usize,
}

/// Samples of a generic integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub termination: Termination,
    pub stats: IntegrationStats,
}

/// Sampled solution of the primal-dual flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<PrimalDualState>,
    pub config: IntegratorConfig,
    pub termination: Termination,
    pub stats: IntegrationStats,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    pub fn first(&self) -> &PrimalDualState {
        &self.samples[0]
    }

    pub fn last(&self) -> &PrimalDualState {
        self.samples.last().expect("trajectory has at least one sample")
    }
}

/// `count` geometrically spaced times from `t0` to `t_end`, both included.
pub fn log_sample_grid(t0: f64, t_end: f64, count: usize) -> Result<Vec<f64>> {
    if !(t0 > 0.0 && t_end > t0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            value: t_end,
        });
    }
    if count < 2 {
        return Err(Error::InvalidParameter {
            name: "count",
            value: count as f64,
        });
    }
    let ratio = libm::log(t_end / t0);
    let last = (count - 1) as f64;
    let mut grid: Vec<f64> = (0..count)
        .map(|k| t0 * libm::exp(ratio * k as f64 / last))
        .collect();
    grid[0] = t0;
    grid[count - 1] = t_end;
    Ok(grid)
}

/// `‖err‖ / (atol + rtol·max(‖y0‖, ‖y1‖))`; a step is accepted when this is
/// at most one.
fn error_ratio(err: &[f64], y0: &[f64], y1: &[f64], rtol: f64, atol: f64) -> f64 {
    let norm = |v: &[f64]| libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    norm(err) / (atol + rtol * norm(y0).max(norm(y1)))
}

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..out.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

/// Collects states at prescribed times.
struct Recorder<'g> {
    grid: &'g [f64],
    next: usize,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl<'g> Recorder<'g> {
    fn new(grid: &'g [f64]) -> Self {
        Self {
            grid,
            next: 0,
            times: Vec::with_capacity(grid.len()),
            states: Vec::with_capacity(grid.len()),
        }
    }

    fn push(&mut self, y: Vec<f64>) {
        self.times.push(self.grid[self.next]);
        self.states.push(y);
        self.next += 1;
    }

    fn pending(&self) -> Option<f64> {
        self.grid.get(self.next).copied()
    }
}

fn prepare_grid(t0: f64, t_end: f64, sample_times: &[f64]) -> Result<Vec<f64>> {
    if !(t_end > t0) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            value: t_end,
        });
    }
    let mut grid = Vec::with_capacity(sample_times.len() + 2);
    grid.push(t0);
    for &s in sample_times {
        if !(s >= t0 && s <= t_end) {
            return Err(Error::InvalidParameter {
                name: "sample_times",
                value: s,
            });
        }
        let last = *grid.last().expect("grid starts with t0");
        if s < last {
            return Err(Error::InvalidParameter {
                name: "sample_times",
                value: s,
            });
        }
        if s > last {
            grid.push(s);
        }
    }
    if *grid.last().expect("nonempty") < t_end {
        grid.push(t_end);
    }
    Ok(grid)
}

/// Integrates `y' = F(t, y)` from `(t0, y0)` to `t_end`, returning states at
/// `t0`, every entry of `sample_times` and `t_end`.
pub fn solve<F: VectorField + ?Sized>(
    field: &F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    sample_times: &[f64],
    config: &IntegratorConfig,
) -> Result<Solution> {
    config.validate()?;
    check_len("initial state", field.dim(), y0.len())?;
    let grid = prepare_grid(t0, t_end, sample_times)?;
    let mut rec = Recorder::new(&grid);
    let estimate = estimate_explicit_steps(field, t0, y0, t_end);
    let (termination, mut stats) = if estimate > config.max_steps as f64 {
        rec.push(y0.to_vec());
        (Termination::StepBudgetExhausted, IntegrationStats::default())
    } else {
        dopri5(field, t0, y0, t_end, config, &mut rec)
    };
    stats.estimated_min_steps = estimate;
    Ok(Solution {
        times: rec.times,
        states: rec.states,
        termination,
        stats,
    })
}

/// Lower estimate of the number of Dormand–Prince steps from `(t0, y0)` to
/// `t_end`: `∫ ρ(J(t, y₀)) / 3.3 dt` on a log grid, where `ρ` is the spectral
/// radius and 3.3 about the extent of the stability region.
pub fn estimate_explicit_steps<F: VectorField + ?Sized>(
    field: &F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
) -> f64 {
    let n = field.dim();
    let mut jac = DMatrix::zeros(n, n);
    let grid = match log_sample_grid(t0, t_end, 64) {
        Ok(g) => g,
        Err(_) => return 0.0,
    };
    let rate = |t: f64, jac: &mut DMatrix<f64>| {
        field.jacobian(t, y0, jac);
        if jac.iter().any(|v| !v.is_finite()) {
            return 0.0;
        }
        jac.clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| libm::hypot(z.re, z.im))
            .fold(0.0, f64::max)
    };
    let mut total = 0.0;
    let mut prev = (grid[0], rate(grid[0], &mut jac));
    for &t in &grid[1..] {
        let r = rate(t, &mut jac);
        total += 0.5 * (r + prev.1) * (t - prev.0);
        prev = (t, r);
    }
    total / STABILITY_EXTENT
}

const STABILITY_EXTENT: f64 = 3.3;

// Dormand–Prince 5(4) coefficients.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const PI_BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

fn underflows(h: f64, t: f64) -> bool {
    h < 1e-14 * t.abs().max(1e-300)
}

fn dopri5<F: VectorField + ?Sized>(
    field: &F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
    rec: &mut Recorder<'_>,
) -> (Termination, IntegrationStats) {
    let n = y0.len();
    let mut stats = IntegrationStats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ys = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];

    field.eval(t, &y, &mut k1);
    stats.evaluations += 1;
    rec.push(y.clone());

    let expo = 0.2 - PI_BETA * 0.75;
    let mut facold: f64 = 1e-4;
    let mut h = cfg.h0.min(cfg.h_max).min(t_end - t0);
    let mut last_rejected = false;

    loop {
        if stats.accepted_steps + stats.rejected_steps >= cfg.max_steps {
            return (Termination::StepBudgetExhausted, stats);
        }
        if underflows(h, t) {
            return (Termination::StepUnderflow, stats);
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        for i in 0..n {
            ys[i] = y[i] + h * A21 * k1[i];
        }
        field.eval(t + C2 * h, &ys, &mut k2);
        for i in 0..n {
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        field.eval(t + C3 * h, &ys, &mut k3);
        for i in 0..n {
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        field.eval(t + C4 * h, &ys, &mut k4);
        for i in 0..n {
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        field.eval(t + C5 * h, &ys, &mut k5);
        for i in 0..n {
            ys[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        field.eval(t + h, &ys, &mut k6);
        for i in 0..n {
            y1[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        field.eval(t + h, &y1, &mut k7);
        stats.evaluations += 6;

        for i in 0..n {
            err[i] = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = error_ratio(&err, &y, &y1, cfg.rtol, cfg.atol);
        if !e.is_finite() {
            stats.rejected_steps += 1;
            last_rejected = true;
            h *= FAC_MIN;
            continue;
        }
        let fac11 = libm::pow(e, expo);
        if e <= 1.0 {
            let fac = (fac11 / libm::pow(facold, PI_BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            facold = e.max(1e-4);
            stats.accepted_steps += 1;
            let t_new = if last { t_end } else { t + h };

            // dense output on (t, t_new]
            while let Some(ts) = rec.pending() {
                if ts > t_new {
                    break;
                }
                if ts == t_new {
                    rec.push(y1.clone());
                    continue;
                }
                let s = (ts - t) / h;
                let s1 = 1.0 - s;
                let mut out = vec![0.0; n];
                for i in 0..n {
                    let r2 = y1[i] - y[i];
                    let r3 = h * k1[i] - r2;
                    let r4 = r2 - h * k7[i] - r3;
                    let r5 = h
                        * (D1 * k1[i]
                            + D3 * k3[i]
                            + D4 * k4[i]
                            + D5 * k5[i]
                            + D6 * k6[i]
                            + D7 * k7[i]);
                    out[i] = y[i] + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)));
                }
                rec.push(out);
            }

            t = t_new;
            core::mem::swap(&mut y, &mut y1);
            core::mem::swap(&mut k1, &mut k7);
            if last {
                return (Termination::ReachedTEnd, stats);
            }
            let mut h_new = (h / fac).min(cfg.h_max);
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new;
        } else {
            stats.rejected_steps += 1;
            last_rejected = true;
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }
}

/// Classical fourth-order Runge–Kutta with constant step `h`; the last step
/// is shortened to land on `t_end`. Every step is recorded.
pub fn rk4_solve<F: VectorField + ?Sized>(
    field: &F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    h: f64,
) -> Result<Solution> {
    check_len("initial state", field.dim(), y0.len())?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter { name: "h", value: h });
    }
    if !(t_end > t0) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            value: t_end,
        });
    }
    let n = y0.len();
    let steps = libm::ceil((t_end - t0) / h - 1e-9) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut ys = vec![0.0; n];
    times.push(t0);
    states.push(y.clone());
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        let step = if s + 1 == steps { t_end - t } else { h };
        field.eval(t, &y, &mut k1);
        axpy(&mut ys, &y, 0.5 * step, &[(1.0, &k1)]);
        field.eval(t + 0.5 * step, &ys, &mut k2);
        axpy(&mut ys, &y, 0.5 * step, &[(1.0, &k2)]);
        field.eval(t + 0.5 * step, &ys, &mut k3);
        axpy(&mut ys, &y, step, &[(1.0, &k3)]);
        field.eval(t + step, &ys, &mut k4);
        for i in 0..n {
            y[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        times.push(if s + 1 == steps { t_end } else { t + step });
        states.push(y.clone());
    }
    Ok(Solution {
        times,
        states,
        termination: Termination::ReachedTEnd,
        stats: IntegrationStats {
            estimated_min_steps: 0.0,
            accepted_steps: steps,
            rejected_steps: 0,
            evaluations: 4 * steps,
            jacobians: 0,
        },
    })
}

fn check_initial(
    problem: &ConstrainedProblem,
    params: &SystemParams,
    initial: &PrimalDualState,
) -> Result<()> {
    initial.check_dims(problem)?;
    if initial.t != params.t0 {
        return Err(Error::InvalidParameter {
            name: "initial.t",
            value: initial.t,
        });
    }
    Ok(())
}

fn to_trajectory(
    solution: Solution,
    problem: &ConstrainedProblem,
    config: IntegratorConfig,
) -> Result<Trajectory> {
    let (n, m) = (problem.n(), problem.m());
    let samples = solution
        .times
        .iter()
        .zip(&solution.states)
        .map(|(&t, y)| PrimalDualState::from_flat(t, y, n, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        samples,
        config,
        termination: solution.termination,
        stats: solution.stats,
    })
}

/// Integrates the primal-dual flow from `initial` (at `t₀`) to `t_end`.
/// Samples are taken at `t₀`, at every entry of `sample_times` and at `t_end`.
pub fn integrate(
    problem: &ConstrainedProblem,
    params: &SystemParams,
    scaling: &TimeScaling,
    initial: &PrimalDualState,
    t_end: f64,
    config: &IntegratorConfig,
    sample_times: &[f64],
) -> Result<Trajectory> {
    check_initial(problem, params, initial)?;
    let flow = PrimalDualFlow::new(problem, params, scaling);
    let y0 = initial.to_flat();
    let solution = solve(&flow, initial.t, y0.as_slice(), t_end, sample_times, config)?;
    to_trajectory(solution, problem, *config)
}

/// Fixed-step RK4 reference integration of the primal-dual flow.
pub fn fixed_rk4(
    problem: &ConstrainedProblem,
    params: &SystemParams,
    scaling: &TimeScaling,
    initial: &PrimalDualState,
    t_end: f64,
    h: f64,
) -> Result<Trajectory> {
    check_initial(problem, params, initial)?;
    let flow = PrimalDualFlow::new(problem, params, scaling);
    let y0 = initial.to_flat();
    let solution = rk4_solve(&flow, initial.t, y0.as_slice(), t_end, h)?;
    let config = IntegratorConfig {
        h0: h,
        h_max: h,
        max_steps: solution.stats.accepted_steps.max(1),
        ..IntegratorConfig::default()
    };
    to_trajectory(solution, problem, config)
}
