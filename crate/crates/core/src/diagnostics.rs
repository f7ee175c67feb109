//! Lyapunov and rate quantities evaluated along a sampled trajectory, and the
//! checks that compare them with their theoretical bounds.
//!
//! Everything here works on [`DiagnosticsRecord`]s so that the checks can be
//! rerun on records read back from disk. Only the settling check needs raw
//! states.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DVector;

use crate::dynamics::PrimalDualState;
use crate::error::{check_len, Error, Result};
use crate::integrate::Trajectory;
use crate::problem::{ConstrainedProblem, SaddlePoint};
use crate::scaling::{self, AssumptionReport, SystemParams, TimeScaling};

/// Relative slack allowed on every pointwise bound.
pub const BOUND_SLACK: f64 = 1e-6;
/// Absolute slack on quantities that are nonnegative in exact arithmetic.
pub const NONNEGATIVE_SLACK: f64 = 1e-10;
/// Relative slack on the three integral estimates.
pub const INTEGRAL_SLACK: f64 = 1e-3;
/// Slack on energy increments, scaled by `1 + E`.
pub const ENERGY_SLACK: f64 = 1e-8;
/// Allowance on fitted slopes for pre-asymptotic transients.
pub const SLOPE_ALLOWANCE: f64 = 0.3;
/// Minimum usable samples for a slope fit.
pub const MIN_FIT_SAMPLES: usize = 8;
/// Values at or below this are treated as machine zero in log fits.
pub const LOG_FLOOR: f64 = 1e-300;
/// Fraction of decreasing pairs required by the trend test.
pub const TREND_FRACTION: f64 = 0.8;
/// Required end/start ratio of the residual products over the final decade.
pub const TREND_DECAY: f64 = 0.1;
/// Tail displacement allowed by the settling check, relative to the initial
/// distance from the saddle point.
pub const SETTLING_FRACTION: f64 = 0.05;
/// Multiple of the integrator tolerance scale allowed for the tail KKT residual.
pub const SETTLING_KKT_FACTOR: f64 = 10.0;

/// Per-sample diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `L(x, λ*) − L(x*, λ)`.
    pub gap: f64,
    /// `L_β(x, λ*) − L_β(x*, λ)` = gap + (β/2)‖Ax − b‖².
    pub gap_aug: f64,
    /// `‖Ax − b‖`.
    pub feas: f64,
    /// `|f(x) − f*|`.
    pub fgap: f64,
    /// `‖(ẋ, λ̇)‖`.
    pub vel: f64,
    pub energy: f64,
    /// `‖∇f(x) − ∇f(x*)‖`.
    pub grad_res: f64,
    /// `‖Aᵀ(λ − λ*)‖`.
    pub dual_res: f64,
    /// `W(t) = δ(t)·gap_aug + ½‖(ẋ, λ̇)‖²`.
    pub w_value: f64,
    /// `φ(t) = ½‖(x, λ) − (x*, λ*)‖²`.
    pub phi_value: f64,
    pub sigma_value: f64,
    /// `t‖λ̇‖`.
    pub dual_speed: f64,
    /// `‖λ − λ*‖`.
    pub dual_dist: f64,
    /// `‖λ − λ(t₀)‖`.
    pub dual_drift: f64,
}

/// A named series that can be fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Gap,
    Feas,
    Fgap,
    Vel,
    Energy,
    GradRes,
    DualRes,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gap => "gap",
            Self::Feas => "feas",
            Self::Fgap => "fgap",
            Self::Vel => "vel",
            Self::Energy => "energy",
            Self::GradRes => "grad_res",
            Self::DualRes => "dual_res",
        }
    }

    pub fn of(self, r: &DiagnosticsRecord) -> f64 {
        match self {
            Self::Gap => r.gap,
            Self::Feas => r.feas,
            Self::Fgap => r.fgap,
            Self::Vel => r.vel,
            Self::Energy => r.energy,
            Self::GradRes => r.grad_res,
            Self::DualRes => r.dual_res,
        }
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub quantity: String,
    pub slope: Option<f64>,
    pub theoretical_exponent: Option<f64>,
    pub bound_violation_count: usize,
    /// Largest `value/bound − 1` over violating samples, 0 when none.
    pub max_relative_violation: f64,
    pub passed: bool,
    pub detail: String,
}

impl RateReport {
    fn new(quantity: &str) -> Self {
        Self {
            quantity: String::from(quantity),
            slope: None,
            theoretical_exponent: None,
            bound_violation_count: 0,
            max_relative_violation: 0.0,
            passed: true,
            detail: String::new(),
        }
    }

    /// Tallies `value ≤ bound·(1 + BOUND_SLACK)` and `value ≥ −NONNEGATIVE_SLACK`.
    fn tally(&mut self, value: f64, bound: f64) {
        let upper_ok = value <= bound * (1.0 + BOUND_SLACK) + NONNEGATIVE_SLACK * f64::EPSILON;
        let lower_ok = value >= -NONNEGATIVE_SLACK;
        if !(upper_ok && lower_ok) || !value.is_finite() {
            self.bound_violation_count += 1;
            self.passed = false;
            let excess = if !lower_ok {
                -value / bound.abs().max(f64::MIN_POSITIVE)
            } else {
                value / bound - 1.0
            };
            if excess.is_nan() {
                self.max_relative_violation = f64::INFINITY;
            } else {
                self.max_relative_violation = self.max_relative_violation.max(excess);
            }
        }
    }
}

/// `f(x) − f(x*)`, as `D_f(x, x*) + ⟨∇f(x*), x − x*⟩` with the Bregman
/// divergence `D_f`, so that it stays accurate far below `ε·|f*|`.
fn value_gap(problem: &ConstrainedProblem, saddle: &SaddlePoint, x: &DVector<f64>) -> Result<f64> {
    let d = x - &saddle.x_star;
    Ok(problem.bregman_f(x, &saddle.x_star)? + problem.grad_f(&saddle.x_star)?.dot(&d))
}

/// `L(x, λ*) − L(x*, λ)`, evaluated as
/// `D_f(x, x*) + ⟨∇f(x*) + Aᵀλ*, x − x*⟩ + ⟨λ* − λ, Ax* − b⟩`.
/// The last two terms vanish at an exact saddle point.
pub fn primal_dual_gap(
    problem: &ConstrainedProblem,
    saddle: &SaddlePoint,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<f64> {
    check_len("lambda", problem.m(), lambda.len())?;
    let d = x - &saddle.x_star;
    let (stationarity, neg_feas) = problem.kkt_operator(&saddle.x_star, &saddle.lambda_star)?;
    Ok(problem.bregman_f(x, &saddle.x_star)? + stationarity.dot(&d)
        - (&saddle.lambda_star - lambda).dot(&neg_feas))
}

/// `E(t) = θ²t²δ(t)(L_β(x, λ*) − L_β(x*, λ)) + ½‖v‖² + (ξ/2)‖(x, λ) − (x*, λ*)‖²`
/// with `v = (x, λ) − (x*, λ*) + θt(ẋ, λ̇)`.
pub fn energy(
    problem: &ConstrainedProblem,
    params: &SystemParams,
    scaling: &TimeScaling,
    saddle: &SaddlePoint,
    state: &PrimalDualState,
) -> Result<f64> {
    state.check_dims(problem)?;
    let t = state.t;
    let theta = params.theta;
    let r = problem.feasibility_residual(&state.x)?;
    let gap_aug = primal_dual_gap(problem, saddle, &state.x, &state.lambda)?
        + 0.5 * params.beta * r.norm_squared();
    let dx = &state.x - &saddle.x_star;
    let dl = &state.lambda - &saddle.lambda_star;
    let vx = &dx + &state.vx * (theta * t);
    let vl = &dl + &state.vlambda * (theta * t);
    let dist2 = dx.norm_squared() + dl.norm_squared();
    Ok(theta * theta * t * t * scaling.delta(t) * gap_aug
        + 0.5 * (vx.norm_squared() + vl.norm_squared())
        + 0.5 * scaling::xi(params) * dist2)
}

/// Everything needed to turn states into records.
#[derive(Debug, Clone, Copy)]
pub struct Setup<'a> {
    pub problem: &'a ConstrainedProblem,
    pub params: &'a SystemParams,
    pub scaling: &'a TimeScaling,
    pub saddle: &'a SaddlePoint,
}

impl Setup<'_> {
    /// Diagnostics at one state; `lambda0` is `λ(t₀)`.
    pub fn record(&self, state: &PrimalDualState, lambda0: &DVector<f64>) -> Result<DiagnosticsRecord> {
        let Setup {
            problem,
            params,
            scaling,
            saddle,
        } = *self;
        state.check_dims(problem)?;
        let t = state.t;
        let r = problem.feasibility_residual(&state.x)?;
        let feas = r.norm();
        let gap = primal_dual_gap(problem, saddle, &state.x, &state.lambda)?;
        let gap_aug = gap + 0.5 * params.beta * feas * feas;
        let vel = state.speed();
        let grad_res = (problem.grad_f(&state.x)? - problem.grad_f(&saddle.x_star)?).norm();
        let dl = &state.lambda - &saddle.lambda_star;
        let dual_res = problem.a().tr_mul(&dl).norm();
        let dist2 = (&state.x - &saddle.x_star).norm_squared() + dl.norm_squared();
        let delta = scaling.delta(t);
        Ok(DiagnosticsRecord {
            t,
            gap,
            gap_aug,
            feas,
            fgap: value_gap(problem, saddle, &state.x)?.abs(),
            vel,
            energy: energy(problem, params, scaling, saddle, state)?,
            grad_res,
            dual_res,
            w_value: delta * gap_aug + 0.5 * vel * vel,
            phi_value: 0.5 * dist2,
            sigma_value: scaling::sigma(params, scaling, t)?,
            dual_speed: t * state.vlambda.norm(),
            dual_dist: dl.norm(),
            dual_drift: (&state.lambda - lambda0).norm(),
        })
    }

    pub fn records(&self, trajectory: &Trajectory) -> Result<Vec<DiagnosticsRecord>> {
        let lambda0 = &trajectory.first().lambda;
        trajectory
            .samples
            .iter()
            .map(|s| self.record(s, lambda0))
            .collect()
    }
}

fn initial(records: &[DiagnosticsRecord]) -> Result<&DiagnosticsRecord> {
    records.first().ok_or(Error::InsufficientSamples {
        found: 0,
        needed: 1,
    })
}

/// `t²δ(t)`, the common denominator of the rate bounds.
fn rate_scale(scaling: &TimeScaling, t: f64) -> f64 {
    t * t * scaling.delta(t)
}

/// Gap bound curve `E(t₀)/(θ²t²δ(t))`.
pub fn gap_bound(energy0: f64, params: &SystemParams, scaling: &TimeScaling, t: f64) -> f64 {
    energy0 / (params.theta * params.theta * rate_scale(scaling, t))
}

/// `0 ≤ gap(t) ≤ E(t₀)/(θ²t²δ(t))` at every sample.
pub fn check_gap_bound(
    records: &[DiagnosticsRecord],
    params: &SystemParams,
    scaling: &TimeScaling,
) -> Result<RateReport> {
    let e0 = initial(records)?.energy;
    let mut rep = RateReport::new("gap_bound");
    for r in records {
        rep.tally(r.gap, gap_bound(e0, params, scaling, r.t));
    }
    rep.detail = format!("E(t0) = {e0}");
    Ok(rep)
}

/// Empirical surrogate for the feasibility constant `C₁`, built from
/// trajectory suprema instead of suprema over `[t₀, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C1Estimate {
    pub value: f64,
    /// `(α − 1) sup ‖λ − λ*‖`.
    pub with_lambda_star: f64,
    /// `(α − 1) sup ‖λ − λ(t₀)‖`.
    pub with_lambda_initial: f64,
}

/// `sup t‖λ̇‖ + (α−1)·max(sup‖λ − λ*‖, sup‖λ − λ(t₀)‖) + t₀²δ(t₀)‖Ax₀ − b‖ + t₀‖λ̇₀‖`.
pub fn empirical_c1(
    records: &[DiagnosticsRecord],
    params: &SystemParams,
    scaling: &TimeScaling,
) -> Result<C1Estimate> {
    let first = initial(records)?;
    let sup = |f: fn(&DiagnosticsRecord) -> f64| records.iter().map(f).fold(0.0, f64::max);
    let speed = sup(|r| r.dual_speed);
    let with_lambda_star = (params.alpha - 1.0) * sup(|r| r.dual_dist);
    let with_lambda_initial = (params.alpha - 1.0) * sup(|r| r.dual_drift);
    let initial_terms = rate_scale(scaling, first.t) * first.feas + first.dual_speed;
    Ok(C1Estimate {
        value: speed + with_lambda_star.max(with_lambda_initial) + initial_terms,
        with_lambda_star,
        with_lambda_initial,
    })
}

/// `t²δ(t)‖Ax(t) − b‖ ≤ 2Ĉ₁` at every sample.
pub fn check_feasibility_bound(
    records: &[DiagnosticsRecord],
    params: &SystemParams,
    scaling: &TimeScaling,
) -> Result<RateReport> {
    let c1 = empirical_c1(records, params, scaling)?;
    let mut rep = RateReport::new("feasibility_bound");
    for r in records {
        rep.tally(rate_scale(scaling, r.t) * r.feas, 2.0 * c1.value);
    }
    rep.detail = format!(
        "empirical C1 = {} (lambda* term {}, lambda(t0) term {})",
        c1.value, c1.with_lambda_star, c1.with_lambda_initial
    );
    Ok(rep)
}

/// `|f(x(t)) − f*| ≤ (E(t₀)/θ² + 2Ĉ₁‖λ*‖)/(t²δ(t))` at every sample.
pub fn check_value_bound(
    records: &[DiagnosticsRecord],
    saddle: &SaddlePoint,
    params: &SystemParams,
    scaling: &TimeScaling,
) -> Result<RateReport> {
    let e0 = initial(records)?.energy;
    let c1 = empirical_c1(records, params, scaling)?;
    let numerator = value_bound_numerator(e0, c1.value, saddle.lambda_star.norm(), params);
    let mut rep = RateReport::new("value_bound");
    for r in records {
        rep.tally(r.fgap, numerator / rate_scale(scaling, r.t));
    }
    rep.detail = format!("bound numerator = {numerator} (empirical C1 = {})", c1.value);
    Ok(rep)
}

fn value_bound_numerator(e0: f64, c1: f64, lambda_star_norm: f64, params: &SystemParams) -> f64 {
    e0 / (params.theta * params.theta) + 2.0 * c1 * lambda_star_norm
}

/// `(1/θ)(1/√ξ + 1)√(2E(t₀))`, the bound on `t‖(ẋ, λ̇)‖`.
pub fn velocity_bound_constant(energy0: f64, params: &SystemParams) -> Result<f64> {
    let xi = scaling::xi(params);
    if !(xi > 0.0) {
        return Err(Error::NotApplicable(format!("xi = {xi} is not positive")));
    }
    Ok((1.0 / params.theta) * (1.0 / libm::sqrt(xi) + 1.0) * libm::sqrt(2.0 * energy0))
}

/// `t‖(ẋ, λ̇)‖ ≤ (1/θ)(1/√ξ + 1)√(2E(t₀))` and
/// `‖(x, λ) − (x*, λ*)‖² ≤ 2E(t₀)/ξ` at every sample. Requires `ξ > 0`.
pub fn check_velocity_bound(records: &[DiagnosticsRecord], params: &SystemParams) -> Result<RateReport> {
    let e0 = initial(records)?.energy;
    let constant = velocity_bound_constant(e0, params)?;
    let xi = scaling::xi(params);
    let mut rep = RateReport::new("velocity_bound");
    for r in records {
        rep.tally(r.t * r.vel, constant);
        rep.tally(2.0 * r.phi_value, 2.0 * e0 / xi);
    }
    rep.detail = format!("t*|velocity| <= {constant}; distance^2 <= {}", 2.0 * e0 / xi);
    Ok(rep)
}

/// `E(t_{k+1}) ≤ E(t_k) + 1e-8·(1 + E(t_k))` for consecutive samples.
pub fn check_energy_monotone(records: &[DiagnosticsRecord]) -> Result<RateReport> {
    initial(records)?;
    let mut rep = RateReport::new("energy_monotone");
    let mut max_increment = 0.0f64;
    for w in records.windows(2) {
        let (prev, next) = (w[0].energy, w[1].energy);
        let increment = next - prev;
        max_increment = max_increment.max(increment);
        let allowed = ENERGY_SLACK * (1.0 + prev.abs());
        if !(increment <= allowed) {
            rep.bound_violation_count += 1;
            rep.passed = false;
            rep.max_relative_violation = rep.max_relative_violation.max(increment / (1.0 + prev.abs()));
        }
    }
    for r in records {
        if !(r.energy >= -NONNEGATIVE_SLACK) {
            rep.bound_violation_count += 1;
            rep.passed = false;
        }
    }
    rep.detail = format!("max positive increment = {max_increment:e}");
    Ok(rep)
}

/// Least-squares slope of `log q` against `log t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub used: usize,
    /// Samples in the window dropped as nonpositive or non-finite.
    pub excluded: usize,
}

/// Fits `log q = c + slope·log t` over the given points.
pub fn fit_log_log_slope(points: impl IntoIterator<Item = (f64, f64)>) -> Result<SlopeFit> {
    let mut n = 0usize;
    let mut excluded = 0usize;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    let mut pts = Vec::new();
    for (t, q) in points {
        if !(q > LOG_FLOOR && q.is_finite() && t > 0.0) {
            excluded += 1;
            continue;
        }
        pts.push((libm::log(t), libm::log(q)));
    }
    // center for conditioning
    let k = pts.len() as f64;
    let (mx, my) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x / k, b + y / k));
    for (x, y) in &pts {
        let (dx, dy) = (x - mx, y - my);
        sx += dx;
        sy += dy;
        sxx += dx * dx;
        sxy += dx * dy;
        n += 1;
    }
    if n < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples {
            found: n,
            needed: MIN_FIT_SAMPLES,
        });
    }
    let nf = n as f64;
    let denom = sxx - sx * sx / nf;
    if !(denom > 0.0) {
        return Err(Error::InsufficientSamples {
            found: 1,
            needed: MIN_FIT_SAMPLES,
        });
    }
    Ok(SlopeFit {
        slope: (sxy - sx * sy / nf) / denom,
        used: n,
        excluded,
    })
}

/// Log-log slope of `quantity` over samples with `window.0 ≤ t ≤ window.1`.
pub fn fit_rate_slope(
    records: &[DiagnosticsRecord],
    quantity: Quantity,
    window: (f64, f64),
) -> Result<SlopeFit> {
    fit_log_log_slope(
        records
            .iter()
            .filter(|r| r.t >= window.0 * (1.0 - 1e-12) && r.t <= window.1 * (1.0 + 1e-12))
            .map(|r| (r.t, quantity.of(r))),
    )
}

/// The tail window `[t_end/10, t_end]`.
pub fn default_window(records: &[DiagnosticsRecord]) -> Result<(f64, f64)> {
    let t_end = records.last().ok_or(Error::InsufficientSamples { found: 0, needed: 1 })?.t;
    Ok((t_end / 10.0, t_end))
}

/// `slope ≤ −(2 + n) + 0.3` over the tail window, for the power family `δ = δ₀tⁿ`.
pub fn check_slope(
    records: &[DiagnosticsRecord],
    quantity: Quantity,
    scaling: &TimeScaling,
) -> Result<RateReport> {
    let TimeScaling::Power { exponent, .. } = scaling else {
        return Err(Error::NotApplicable(String::from(
            "rate exponent is only known for the power family",
        )));
    };
    let window = default_window(records)?;
    let fit = fit_rate_slope(records, quantity, window)?;
    let theory = -(2.0 + exponent);
    let mut rep = RateReport::new(quantity.name());
    rep.slope = Some(fit.slope);
    rep.theoretical_exponent = Some(theory);
    rep.passed = fit.slope <= theory + SLOPE_ALLOWANCE;
    rep.detail = format!(
        "slope {} over [{}, {}] ({} samples, {} excluded); required <= {}",
        fit.slope,
        window.0,
        window.1,
        fit.used,
        fit.excluded,
        theory + SLOPE_ALLOWANCE
    );
    Ok(rep)
}

/// Fraction of ordered pairs `i < j` with `q_j < q_i` among pairs with
/// `q_j ≠ q_i`; 1 when all values are equal.
pub fn decreasing_pair_fraction(values: &[f64]) -> f64 {
    let (mut down, mut total) = (0usize, 0usize);
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            if values[j] != values[i] {
                total += 1;
                if values[j] < values[i] {
                    down += 1;
                }
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        down as f64 / total as f64
    }
}

/// Trend test on `√t·δ(t)^{1/4}·‖∇f(x) − ∇f(x*)‖` and `√t·δ(t)^{1/4}·‖Aᵀ(λ − λ*)‖`
/// over the final decade. Needs the strict parameter conditions.
pub fn check_residual_rates(
    records: &[DiagnosticsRecord],
    scaling: &TimeScaling,
    assumption: &AssumptionReport,
) -> Result<[RateReport; 2]> {
    if !assumption.satisfied {
        return Err(Error::NotApplicable(String::from(
            "strict parameter conditions are not satisfied",
        )));
    }
    let (lo, hi) = default_window(records)?;
    let tail: Vec<&DiagnosticsRecord> = records
        .iter()
        .filter(|r| r.t >= lo * (1.0 - 1e-12) && r.t <= hi)
        .collect();
    if tail.len() < 2 {
        return Err(Error::InsufficientSamples {
            found: tail.len(),
            needed: 2,
        });
    }
    let weight = |t: f64| libm::sqrt(t) * libm::pow(scaling.delta(t), 0.25);
    let one = |name: &str, q: Quantity| {
        let products: Vec<f64> = tail.iter().map(|r| weight(r.t) * q.of(r)).collect();
        let frac = decreasing_pair_fraction(&products);
        let start = products[0];
        let end = *products.last().expect("nonempty tail");
        let ratio = if start == 0.0 { 0.0 } else { end / start };
        let mut rep = RateReport::new(name);
        rep.passed = (start == 0.0 && end == 0.0) || (frac >= TREND_FRACTION && ratio < TREND_DECAY);
        rep.detail = format!(
            "decreasing pair fraction {frac:.4} (need >= {TREND_FRACTION}), end/start {ratio:e} (need < {TREND_DECAY})"
        );
        if !rep.passed {
            rep.bound_violation_count = 1;
        }
        rep
    };
    Ok([
        one("grad_res_decay", Quantity::GradRes),
        one("dual_res_decay", Quantity::DualRes),
    ])
}

/// Result of [`check_trajectory_settling`].
#[derive(Debug, Clone, PartialEq)]
pub struct Settling {
    pub settled: bool,
    /// `max ‖(x, λ)(t) − (x, λ)(t_end)‖` over the last half-decade.
    pub tail_displacement: f64,
    /// `‖(x₀, λ₀) − (x*, λ*)‖`.
    pub initial_distance: f64,
    pub final_kkt_residual: f64,
    /// KKT residual of the limit extrapolated from the tail.
    pub limit_kkt_residual: f64,
    pub final_distance_to_saddle: f64,
    pub detail: String,
}

/// Aitken extrapolation of `z(t)` from samples at `t_c/q², t_c/q, t_c`,
/// exact for `z(t) = z∞ + C·t^(−p)`. Components whose differences are not
/// geometric keep their last value.
fn aitken_limit(za: &[f64], zb: &[f64], zc: &[f64]) -> Vec<f64> {
    za.iter()
        .zip(zb)
        .zip(zc)
        .map(|((&a, &b), &c)| {
            let (d1, d2) = (b - a, c - b);
            let geometric = d1 * d2 > 0.0 && d2.abs() < d1.abs();
            if geometric {
                c - d2 * d2 / (d2 - d1)
            } else {
                c
            }
        })
        .collect()
}

/// Finite-dimensional stand-in for trajectory convergence: the tail over
/// `[t_end/√10, t_end]` must move less than 5% of the initial distance to the
/// saddle point, and the limit extrapolated from the tail must have a KKT
/// residual below `10 · tolerance_scale`.
pub fn check_trajectory_settling(
    states: &[PrimalDualState],
    problem: &ConstrainedProblem,
    saddle: &SaddlePoint,
    tolerance_scale: f64,
) -> Result<Settling> {
    let first = states.first().ok_or(Error::InsufficientSamples { found: 0, needed: 1 })?;
    let last = states.last().expect("nonempty");
    let pair_dist = |a: &PrimalDualState, x: &DVector<f64>, l: &DVector<f64>| {
        libm::sqrt((&a.x - x).norm_squared() + (&a.lambda - l).norm_squared())
    };
    let initial_distance = pair_dist(first, &saddle.x_star, &saddle.lambda_star);
    let tail_start = last.t / libm::sqrt(10.0);
    let tail_displacement = states
        .iter()
        .filter(|s| s.t >= tail_start)
        .map(|s| pair_dist(s, &last.x, &last.lambda))
        .fold(0.0, f64::max);
    let final_kkt_residual = problem.kkt_residual(&last.x, &last.lambda)?;
    let final_distance_to_saddle = pair_dist(last, &saddle.x_star, &saddle.lambda_star);

    // three samples a quarter-decade apart, at equal index spacing so that
    // the ratios match exactly on a logarithmic grid
    let c = states.len() - 1;
    let quarter = last.t / libm::pow(10.0, 0.25);
    let k = c - states.iter().rposition(|s| s.t <= quarter).unwrap_or(0);
    let limit_kkt_residual = if k > 0 && 2 * k <= c {
        let pair = |s: &PrimalDualState| s.x.iter().chain(s.lambda.iter()).copied().collect::<Vec<f64>>();
        let z = aitken_limit(&pair(&states[c - 2 * k]), &pair(&states[c - k]), &pair(last));
        let n = problem.n();
        let x = DVector::from_column_slice(&z[..n]);
        let l = DVector::from_column_slice(&z[n..]);
        problem.kkt_residual(&x, &l)?.min(final_kkt_residual)
    } else {
        final_kkt_residual
    };

    let moved_ok = tail_displacement <= SETTLING_FRACTION * initial_distance;
    let kkt_ok = limit_kkt_residual <= SETTLING_KKT_FACTOR * tolerance_scale;
    let settled = (initial_distance == 0.0 && tail_displacement == 0.0) || (moved_ok && kkt_ok);
    let detail = format!(
        "tail displacement {tail_displacement:e} vs {:e}; KKT residual of the extrapolated limit {limit_kkt_residual:e} vs {:e} (final sample {final_kkt_residual:e}); distance to saddle {final_distance_to_saddle:e}",
        SETTLING_FRACTION * initial_distance,
        SETTLING_KKT_FACTOR * tolerance_scale
    );
    Ok(Settling {
        settled,
        tail_displacement,
        initial_distance,
        final_kkt_residual,
        limit_kkt_residual,
        final_distance_to_saddle,
        detail,
    })
}

/// Trapezoid values of the three integral estimates and their bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralEstimates {
    /// `∫ tσ(t)·gap dt`, `β∫ tδ(t)‖Ax − b‖² dt`, `ξ∫ t‖(ẋ, λ̇)‖² dt`.
    pub values: [f64; 3],
    /// `E(t₀)/θ²`, `2E(t₀)/θ`, `E(t₀)/θ`. Integrating the energy decay
    /// inequality gives `θ²∫ tσ(t)·gap dt ≤ E(t₀)`, hence the first one.
    pub bounds: [f64; 3],
    /// `true` iff the first integral is also below `E(t₀)` itself, the form
    /// in which the estimate is often quoted without the `θ²`.
    pub first_below_e0: bool,
    pub passed: bool,
}

fn trapezoid(points: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut total = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (t, v) in points {
        if let Some((tp, vp)) = prev {
            total += 0.5 * (v + vp) * (t - tp);
        }
        prev = Some((t, v));
    }
    total
}

pub fn integral_estimates(
    records: &[DiagnosticsRecord],
    params: &SystemParams,
    scaling: &TimeScaling,
) -> Result<IntegralEstimates> {
    let e0 = initial(records)?.energy;
    let xi = scaling::xi(params);
    let values = [
        trapezoid(records.iter().map(|r| (r.t, r.t * r.sigma_value * r.gap))),
        params.beta * trapezoid(records.iter().map(|r| (r.t, r.t * scaling.delta(r.t) * r.feas * r.feas))),
        xi * trapezoid(records.iter().map(|r| (r.t, r.t * r.vel * r.vel))),
    ];
    let theta = params.theta;
    let bounds = [e0 / (theta * theta), 2.0 * e0 / theta, e0 / theta];
    let first_below_e0 = values[0] <= e0 * (1.0 + INTEGRAL_SLACK);
    let passed = values
        .iter()
        .zip(&bounds)
        .all(|(v, b)| *v <= b * (1.0 + INTEGRAL_SLACK));
    Ok(IntegralEstimates {
        values,
        bounds,
        first_below_e0,
        passed,
    })
}

/// The three pointwise bound curves at one record: gap, feasibility and
/// value bounds.
pub fn bound_curves(
    records: &[DiagnosticsRecord],
    saddle: &SaddlePoint,
    params: &SystemParams,
    scaling: &TimeScaling,
) -> Result<Vec<[f64; 3]>> {
    let e0 = initial(records)?.energy;
    let c1 = empirical_c1(records, params, scaling)?;
    let numerator = value_bound_numerator(e0, c1.value, saddle.lambda_star.norm(), params);
    Ok(records
        .iter()
        .map(|r| {
            let s = rate_scale(scaling, r.t);
            [
                gap_bound(e0, params, scaling, r.t),
                2.0 * c1.value / s,
                numerator / s,
            ]
        })
        .collect())
}

/// One named entry of a verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// `false` when the hypotheses of the check do not hold; such checks never
    /// fail a verdict.
    pub applicable: bool,
    /// `true` for pointwise bound checks, whose failure is a bound violation.
    pub is_bound: bool,
    pub slope: Option<f64>,
    pub detail: String,
}

impl CheckOutcome {
    fn from_report(name: &str, is_bound: bool, rep: RateReport) -> Self {
        let detail = if rep.bound_violation_count > 0 && is_bound {
            format!(
                "{} violations, max relative excess {:e}; {}",
                rep.bound_violation_count, rep.max_relative_violation, rep.detail
            )
        } else {
            rep.detail
        };
        Self {
            name: String::from(name),
            passed: rep.passed,
            applicable: true,
            is_bound,
            slope: rep.slope,
            detail,
        }
    }

    fn inapplicable(name: &str, why: String) -> Self {
        Self {
            name: String::from(name),
            passed: true,
            applicable: false,
            is_bound: false,
            slope: None,
            detail: format!("inapplicable: {why}"),
        }
    }

    fn from_result(name: &str, is_bound: bool, r: Result<RateReport>) -> Self {
        match r {
            Ok(rep) => Self::from_report(name, is_bound, rep),
            Err(e) => Self::inapplicable(name, format!("{e}")),
        }
    }
}

/// Inputs of [`run_checks`].
#[derive(Debug, Clone, Copy)]
pub struct CheckInputs<'a> {
    pub problem: &'a ConstrainedProblem,
    pub params: &'a SystemParams,
    pub scaling: &'a TimeScaling,
    pub saddle: &'a SaddlePoint,
    pub records: &'a [DiagnosticsRecord],
    pub states: &'a [PrimalDualState],
    /// `atol + rtol·‖final state‖` of the run that produced the samples.
    pub tolerance_scale: f64,
}

/// Runs every check and returns the outcomes in a fixed order.
pub fn run_checks(inputs: &CheckInputs<'_>) -> Vec<CheckOutcome> {
    let CheckInputs {
        problem,
        params,
        scaling,
        saddle,
        records,
        states,
        tolerance_scale,
    } = *inputs;
    let mut out = Vec::new();
    out.push(CheckOutcome::from_result(
        "energy_monotone",
        true,
        check_energy_monotone(records),
    ));
    out.push(CheckOutcome::from_result(
        "gap_bound",
        true,
        check_gap_bound(records, params, scaling),
    ));
    out.push(CheckOutcome::from_result(
        "feasibility_bound",
        true,
        check_feasibility_bound(records, params, scaling),
    ));
    out.push(CheckOutcome::from_result(
        "value_bound",
        true,
        check_value_bound(records, saddle, params, scaling),
    ));
    out.push(CheckOutcome::from_result(
        "velocity_bound",
        true,
        check_velocity_bound(records, params),
    ));
    out.push(match integral_estimates(records, params, scaling) {
        Ok(ie) => CheckOutcome {
            name: String::from("integral_estimates"),
            passed: ie.passed,
            applicable: true,
            is_bound: true,
            slope: None,
            detail: format!(
                "values [{:e}, {:e}, {:e}] vs bounds [{:e}, {:e}, {:e}]; first integral {} E(t0) = {:e}",
                ie.values[0],
                ie.values[1],
                ie.values[2],
                ie.bounds[0],
                ie.bounds[1],
                ie.bounds[2],
                if ie.first_below_e0 { "below" } else { "above" },
                ie.bounds[0] * params.theta * params.theta
            ),
        },
        Err(e) => CheckOutcome::inapplicable("integral_estimates", format!("{e}")),
    });
    for q in [Quantity::Gap, Quantity::Feas, Quantity::Fgap] {
        let name = format!("slope_{}", q.name());
        out.push(CheckOutcome::from_result(&name, false, check_slope(records, q, scaling)));
    }
    let strict = scaling::validate_assumption_4_1(params, scaling, problem);
    match check_residual_rates(records, scaling, &strict) {
        Ok(reports) => {
            for rep in reports {
                let name = rep.quantity.clone();
                out.push(CheckOutcome::from_report(&name, false, rep));
            }
        }
        Err(e) => {
            for name in ["grad_res_decay", "dual_res_decay"] {
                out.push(CheckOutcome::inapplicable(name, format!("{e}")));
            }
        }
    }
    out.push(if strict.satisfied {
        match check_trajectory_settling(states, problem, saddle, tolerance_scale) {
            Ok(s) => CheckOutcome {
                name: String::from("trajectory_settling"),
                passed: s.settled,
                applicable: true,
                is_bound: false,
                slope: None,
                detail: s.detail,
            },
            Err(e) => CheckOutcome::inapplicable("trajectory_settling", format!("{e}")),
        }
    } else {
        CheckOutcome::inapplicable(
            "trajectory_settling",
            String::from("strict parameter conditions are not satisfied"),
        )
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtin_problem;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn params() -> SystemParams {
        SystemParams::new(8.0, 10.0, 1.0 / 6.0, 1.0).unwrap()
    }

    fn saddle(p: &ConstrainedProblem) -> SaddlePoint {
        SaddlePoint::from_pair(p, v(&[0.8, 0.6, 0.2, 0.6]), v(&[0.4, 1.2])).unwrap()
    }

    fn initial_state() -> PrimalDualState {
        PrimalDualState::new(1.0, v(&[0.5; 4]), v(&[0.2, 0.2]), v(&[0.5; 4]), v(&[0.5, 0.5]))
            .unwrap()
    }

    fn record(t: f64, value: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            gap: value,
            gap_aug: value,
            feas: value,
            fgap: value,
            vel: value,
            energy: value,
            grad_res: value,
            dual_res: value,
            w_value: value,
            phi_value: value,
            sigma_value: 0.0,
            dual_speed: 0.0,
            dual_dist: 0.0,
            dual_drift: 0.0,
        }
    }

    #[test]
    fn energy_at_saddle_and_initial_state() {
        let p = builtin_problem("quadratic_example").unwrap();
        let s = saddle(&p);
        let rest = PrimalDualState::at_rest(3.0, s.x_star.clone(), s.lambda_star.clone());
        let e = energy(&p, &params(), &TimeScaling::constant(), &s, &rest).unwrap();
        assert!(e.abs() < 1e-14);
        let e0 = energy(&p, &params(), &TimeScaling::constant(), &s, &initial_state()).unwrap();
        assert!((e0 - 0.667778).abs() < 1e-5, "{e0}");
    }

    #[test]
    fn energy_scaling_only_enters_through_gap_term() {
        let p = builtin_problem("quadratic_example").unwrap();
        let s = saddle(&p);
        let st = initial_state();
        let pr = params();
        let gap_term = |sc: &TimeScaling| {
            let r = p.feasibility_residual(&st.x).unwrap();
            let g = primal_dual_gap(&p, &s, &st.x, &st.lambda).unwrap() + 5.0 * r.norm_squared();
            pr.theta * pr.theta * sc.delta(st.t) * g
        };
        let a = TimeScaling::power(2.0, 3.0).unwrap();
        let b = TimeScaling::constant();
        let ea = energy(&p, &pr, &a, &s, &st).unwrap() - gap_term(&a);
        let eb = energy(&p, &pr, &b, &s, &st).unwrap() - gap_term(&b);
        assert!((ea - eb).abs() < 1e-14);
    }

    #[test]
    fn gap_examples() {
        let p = builtin_problem("quadratic_example").unwrap();
        let s = saddle(&p);
        assert!(primal_dual_gap(&p, &s, &s.x_star, &s.lambda_star).unwrap().abs() < 1e-15);
        let g = primal_dual_gap(&p, &s, &v(&[0.5; 4]), &v(&[0.2, 0.2])).unwrap();
        assert!((g - 0.2).abs() < 1e-14);
        // feasible x: x₃ = x₁ − x₂, x₄ = x₂
        let x = v(&[1.0, 0.3, 0.7, 0.3]);
        let g = primal_dual_gap(&p, &s, &x, &v(&[5.0, 5.0])).unwrap();
        assert!((g - (p.eval_f(&x).unwrap() - 0.6)).abs() < 1e-14);
    }

    #[test]
    fn record_fields_at_initial_state() {
        let p = builtin_problem("quadratic_example").unwrap();
        let s = saddle(&p);
        let pr = params();
        let sc = TimeScaling::constant();
        let setup = Setup {
            problem: &p,
            params: &pr,
            scaling: &sc,
            saddle: &s,
        };
        let st = initial_state();
        let r = setup.record(&st, &st.lambda).unwrap();
        assert!((r.gap - 0.2).abs() < 1e-14);
        assert!((r.gap_aug - 1.45).abs() < 1e-14);
        assert!((r.feas - 0.5).abs() < 1e-15);
        assert!((r.fgap - 0.4).abs() < 1e-14);
        assert!((r.sigma_value - 4.0).abs() < 1e-12);
        assert!((r.dual_speed - 0.5 * 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.dual_drift, 0.0);
        assert!((r.phi_value - 0.62).abs() < 1e-14);
        assert!(r.w_value >= 0.0);
        // initial contribution to the feasibility constant: t₀²δ(t₀)‖Ax₀ − b‖
        assert!((rate_scale(&sc, r.t) * r.feas - 0.5).abs() < 1e-15);
    }

    #[test]
    fn velocity_constant_matches_hand_value() {
        let c = velocity_bound_constant(0.667778, &params()).unwrap();
        assert!((c - 23.92).abs() < 0.01, "{c}");
        let boundary = SystemParams::new(7.0, 10.0, 1.0 / 6.0, 1.0).unwrap();
        assert!(matches!(
            velocity_bound_constant(0.5, &boundary),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn slope_of_analytic_curves() {
        let pr = params();
        for n in [0.0, 1.0, 2.0, 3.0] {
            let sc = TimeScaling::power(1.0, n).unwrap();
            let pts = (0..50).map(|k| {
                let t = 10f64.powf(1.0 + k as f64 / 49.0);
                (t, gap_bound(0.7, &pr, &sc, t))
            });
            let fit = fit_log_log_slope(pts).unwrap();
            assert!((fit.slope + 2.0 + n).abs() < 1e-10, "{}", fit.slope);
        }
        let flat: Vec<_> = (1..=20).map(|k| record(k as f64, 3.0)).collect();
        assert!(fit_rate_slope(&flat, Quantity::Gap, (1.0, 20.0)).unwrap().slope.abs() < 1e-12);
        let few: Vec<_> = (1..=5).map(|k| record(k as f64, 3.0)).collect();
        assert!(matches!(
            fit_rate_slope(&few, Quantity::Gap, (1.0, 5.0)),
            Err(Error::InsufficientSamples { .. })
        ));
        let mut zeros: Vec<_> = (1..=20).map(|k| record(k as f64, 1.0 / k as f64)).collect();
        zeros[3].gap = 0.0;
        let fit = fit_rate_slope(&zeros, Quantity::Gap, (1.0, 20.0)).unwrap();
        assert_eq!(fit.excluded, 1);
        assert!((fit.slope + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pair_fraction() {
        assert_eq!(decreasing_pair_fraction(&[3.0, 2.0, 1.0]), 1.0);
        assert_eq!(decreasing_pair_fraction(&[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(decreasing_pair_fraction(&[0.0, 0.0]), 1.0);
        assert!((decreasing_pair_fraction(&[3.0, 1.0, 2.0]) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_records_pass_everything() {
        let p = builtin_problem("quadratic_example").unwrap();
        let s = saddle(&p);
        let pr = params();
        let sc = TimeScaling::power(1.0, 2.0).unwrap();
        let setup = Setup {
            problem: &p,
            params: &pr,
            scaling: &sc,
            saddle: &s,
        };
        let states: Vec<_> = (0..30)
            .map(|k| PrimalDualState::at_rest(10f64.powf(k as f64 / 29.0), s.x_star.clone(), s.lambda_star.clone()))
            .collect();
        let recs: Vec<_> = states.iter().map(|st| setup.record(st, &s.lambda_star).unwrap()).collect();
        assert!(recs.iter().all(|r| r.energy.abs() < 1e-14 && r.vel == 0.0));
        let c = check_energy_monotone(&recs).unwrap();
        assert!(c.passed);
        let [g, d] = check_residual_rates(&recs, &sc, &scaling::validate_assumption_4_1(&pr, &sc, &p)).unwrap();
        assert!(g.passed && d.passed);
        let ie = integral_estimates(&recs, &pr, &sc).unwrap();
        // rounding in the gap at the saddle point, weighted by tσ
        assert!(ie.values.iter().all(|v| v.abs() < 1e-10), "{:?}", ie.values);
        let settle = check_trajectory_settling(&states, &p, &s, 1e-10).unwrap();
        assert!(settle.settled);
    }

    #[test]
    fn negative_gap_is_a_violation() {
        let pr = params();
        let sc = TimeScaling::constant();
        let mut recs: Vec<_> = (1..=10).map(|k| record(k as f64, 1e-3 / (k * k) as f64)).collect();
        recs[0].energy = 1.0;
        assert!(check_gap_bound(&recs, &pr, &sc).unwrap().passed);
        recs[4].gap = -1e-4;
        let rep = check_gap_bound(&recs, &pr, &sc).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.bound_violation_count, 1);
    }

    #[test]
    fn energy_increase_is_a_violation() {
        let mut recs: Vec<_> = (1..=10).map(|k| record(k as f64, 1.0 / k as f64)).collect();
        assert!(check_energy_monotone(&recs).unwrap().passed);
        recs[6].energy = 0.5;
        let rep = check_energy_monotone(&recs).unwrap();
        assert!(!rep.passed);
        assert!(rep.max_relative_violation > 0.1);
    }

    #[test]
    fn beta_zero_makes_second_integral_vanish() {
        let pr = SystemParams::new(8.0, 0.0, 1.0 / 6.0, 1.0).unwrap();
        let recs: Vec<_> = (1..=10).map(|k| record(k as f64, 0.1)).collect();
        let ie = integral_estimates(&recs, &pr, &TimeScaling::constant()).unwrap();
        assert_eq!(ie.values[1], 0.0);
    }

    #[test]
    fn trapezoid_is_exact_for_linear_integrands() {
        let v = trapezoid([(1.0, 1.0), (2.0, 2.0), (4.0, 4.0)].into_iter());
        assert!((v - 7.5).abs() < 1e-15);
    }
}
