//! Time rescaling `δ(t)`, the margin `σ(t)`, and the parameter checks that
//! gate the rate and convergence results.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::problem::ConstrainedProblem;

/// Tolerance for boundary equalities in the non-strict checks.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Minimum margin demanded by the strict checks.
pub const STRICT_MARGIN: f64 = 1e-12;

/// Points of the log grid used to estimate `sup tδ̇/δ` for custom scalings.
pub const CUSTOM_GRID_POINTS: usize = 10_000;
/// The custom-scaling grid spans `[t₀, CUSTOM_GRID_SPAN · t₀]`.
pub const CUSTOM_GRID_SPAN: f64 = 1e4;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied `δ` and `δ̇`.
#[derive(Clone)]
pub struct CustomScaling {
    pub label: String,
    delta: ScalarFn,
    delta_dot: ScalarFn,
}

impl CustomScaling {
    pub fn new(
        label: impl Into<String>,
        delta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        delta_dot: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            delta: Arc::new(delta),
            delta_dot: Arc::new(delta_dot),
        }
    }
}

impl fmt::Debug for CustomScaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomScaling")
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}

/// The time rescaling function multiplying both gradient terms of the flow.
#[derive(Debug, Clone)]
pub enum TimeScaling {
    /// `δ(t) = δ₀ tⁿ`.
    Power { delta0: f64, exponent: f64 },
    /// Arbitrary `δ`; its supremum conditions are checked on a grid only.
    Custom(CustomScaling),
}

/// `t^p`, by repeated multiplication for small integer `p`.
fn power(t: f64, p: f64) -> f64 {
    if p == libm::trunc(p) && (1.0..=16.0).contains(&p) {
        let mut acc = t;
        for _ in 1..p as u32 {
            acc *= t;
        }
        acc
    } else {
        libm::pow(t, p)
    }
}

impl TimeScaling {
    pub fn power(delta0: f64, exponent: f64) -> Result<Self> {
        if !(delta0 > 0.0 && delta0.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "delta0",
                value: delta0,
            });
        }
        if !(exponent >= 0.0 && exponent.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "n_exponent",
                value: exponent,
            });
        }
        Ok(Self::Power { delta0, exponent })
    }

    /// `δ ≡ 1`.
    pub fn constant() -> Self {
        Self::Power {
            delta0: 1.0,
            exponent: 0.0,
        }
    }

    pub fn delta(&self, t: f64) -> f64 {
        match self {
            Self::Power { delta0, exponent } => {
                if *exponent == 0.0 {
                    *delta0
                } else {
                    delta0 * power(t, *exponent)
                }
            }
            Self::Custom(c) => (c.delta)(t),
        }
    }

    pub fn delta_dot(&self, t: f64) -> f64 {
        match self {
            Self::Power { delta0, exponent } => {
                if *exponent == 0.0 {
                    0.0
                } else {
                    exponent * delta0 * power(t, exponent - 1.0)
                }
            }
            Self::Custom(c) => (c.delta_dot)(t),
        }
    }

    /// `t δ̇(t) / δ(t)`; identically `n` for the power family.
    pub fn log_derivative(&self, t: f64) -> f64 {
        match self {
            Self::Power { exponent, .. } => *exponent,
            Self::Custom(_) => t * self.delta_dot(t) / self.delta(t),
        }
    }

    /// `sup_{t ≥ t₀} t δ̇(t)/δ(t)`: exact for the power family, a grid
    /// estimate for custom scalings.
    pub fn sup_log_derivative(&self, t0: f64) -> f64 {
        match self {
            Self::Power { exponent, .. } => *exponent,
            Self::Custom(_) => custom_grid(t0)
                .map(|t| self.log_derivative(t))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn is_positive_from(&self, t0: f64) -> bool {
        match self {
            Self::Power { delta0, .. } => *delta0 > 0.0,
            Self::Custom(_) => custom_grid(t0).all(|t| self.delta(t) > 0.0),
        }
    }

    fn is_nondecreasing_from(&self, t0: f64) -> bool {
        match self {
            Self::Power { exponent, .. } => *exponent >= 0.0,
            Self::Custom(_) => custom_grid(t0).all(|t| self.delta_dot(t) >= 0.0),
        }
    }

    /// Short human-readable label such as `t^2` or `1`.
    pub fn label(&self) -> String {
        match self {
            Self::Power { delta0, exponent } => {
                let power = if *exponent == 0.0 {
                    String::from("1")
                } else if *exponent == 1.0 {
                    String::from("t")
                } else {
                    format!("t^{exponent}")
                };
                if *delta0 == 1.0 {
                    power
                } else if *exponent == 0.0 {
                    format!("{delta0}")
                } else {
                    format!("{delta0}*{power}")
                }
            }
            Self::Custom(c) => c.label.clone(),
        }
    }
}

fn custom_grid(t0: f64) -> impl Iterator<Item = f64> {
    let last = (CUSTOM_GRID_POINTS - 1) as f64;
    (0..CUSTOM_GRID_POINTS)
        .map(move |k| t0 * libm::pow(CUSTOM_GRID_SPAN, k as f64 / last))
}

/// Damping `α`, augmentation `β`, extrapolation `θ` and initial time `t₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub t0: f64,
}

impl SystemParams {
    pub fn new(alpha: f64, beta: f64, theta: f64, t0: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: alpha,
            });
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "beta",
                value: beta,
            });
        }
        if !(theta > 0.0 && theta <= 0.5) {
            return Err(Error::InvalidParameter {
                name: "theta",
                value: theta,
            });
        }
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "t0",
                value: t0,
            });
        }
        Ok(Self {
            alpha,
            beta,
            theta,
            t0,
        })
    }

    /// `(1 − 2θ)/θ`, the admissible ceiling for `tδ̇/δ`.
    pub fn scaling_ceiling(&self) -> f64 {
        (1.0 - 2.0 * self.theta) / self.theta
    }
}

/// `ξ = αθ − θ − 1`.
pub fn xi(params: &SystemParams) -> f64 {
    params.alpha * params.theta - params.theta - 1.0
}

/// `σ(t) = ((1 − 2θ)/θ) δ(t) − t δ̇(t)`.
pub fn sigma(params: &SystemParams, scaling: &TimeScaling, t: f64) -> Result<f64> {
    if !(t >= params.t0) {
        return Err(Error::TimeBeforeStart { t, t0: params.t0 });
    }
    Ok(params.scaling_ceiling() * scaling.delta(t) - t * scaling.delta_dot(t))
}

/// Outcome of a parameter check. Violations are collected, never raised.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub satisfied: bool,
    /// `(1 − 2θ)/θ − sup tδ̇/δ`; may be negative.
    pub margin_c2: f64,
    pub xi: f64,
    pub sup_log_derivative: f64,
    /// Whether `sup tδ̇/δ ≤ α − 3` holds, which the non-strict conditions imply.
    pub alpha_bound_holds: bool,
    pub messages: Vec<String>,
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}",
            if self.satisfied { "satisfied" } else { "violated" }
        )?;
        writeln!(f, "  sup t*delta'/delta = {}", self.sup_log_derivative)?;
        writeln!(f, "  margin C2          = {}", self.margin_c2)?;
        writeln!(f, "  xi                 = {}", self.xi)?;
        for m in &self.messages {
            writeln!(f, "  - {m}")?;
        }
        Ok(())
    }
}

fn common_report(params: &SystemParams, scaling: &TimeScaling) -> AssumptionReport {
    let sup = scaling.sup_log_derivative(params.t0);
    AssumptionReport {
        satisfied: true,
        margin_c2: params.scaling_ceiling() - sup,
        xi: xi(params),
        sup_log_derivative: sup,
        alpha_bound_holds: sup <= params.alpha - 3.0 + BOUNDARY_TOL,
        messages: Vec::new(),
    }
}

impl AssumptionReport {
    fn require(&mut self, ok: bool, message: impl FnOnce() -> String) {
        if !ok {
            self.satisfied = false;
            self.messages.push(message());
        }
    }
}

/// Non-strict conditions under which the energy decays and the
/// `O(1/(t²δ(t)))` rates hold: `α ≥ 3`, `β ≥ 0`, `1/2 ≥ θ ≥ 1/(α−1)` and
/// `sup tδ̇/δ ≤ (1 − 2θ)/θ`.
pub fn validate_assumption_3_1(params: &SystemParams, scaling: &TimeScaling) -> AssumptionReport {
    let mut r = common_report(params, scaling);
    let SystemParams {
        alpha, beta, theta, ..
    } = *params;
    r.require(alpha >= 3.0 - BOUNDARY_TOL, || {
        format!("alpha >= 3 fails (alpha = {alpha})")
    });
    r.require(beta >= 0.0, || format!("beta >= 0 fails (beta = {beta})"));
    r.require(theta <= 0.5 + BOUNDARY_TOL, || {
        format!("theta <= 1/2 fails (theta = {theta})")
    });
    r.require(
        alpha > 1.0 && theta >= 1.0 / (alpha - 1.0) - BOUNDARY_TOL,
        || format!("theta >= 1/(alpha-1) fails (theta = {theta}, alpha = {alpha})"),
    );
    let ceiling = params.scaling_ceiling();
    let sup = r.sup_log_derivative;
    r.require(sup <= ceiling + BOUNDARY_TOL, || {
        format!("sup t*delta'/delta <= (1-2theta)/theta fails ({sup} > {ceiling})")
    });
    r.require(scaling.is_positive_from(params.t0), || {
        String::from("delta(t) > 0 fails on [t0, inf)")
    });
    r
}

/// Strict conditions used for the gradient/dual rates and trajectory
/// convergence: `α > 3`, `1/2 > θ > 1/(α−1)`, `sup tδ̇/δ < (1 − 2θ)/θ`,
/// `δ` nondecreasing and `∇f` Lipschitz with a known constant.
pub fn validate_assumption_4_1(
    params: &SystemParams,
    scaling: &TimeScaling,
    problem: &ConstrainedProblem,
) -> AssumptionReport {
    let mut r = common_report(params, scaling);
    let SystemParams {
        alpha, beta, theta, ..
    } = *params;
    r.require(alpha - 3.0 > STRICT_MARGIN, || {
        format!("alpha > 3 fails (alpha = {alpha})")
    });
    r.require(beta >= 0.0, || format!("beta >= 0 fails (beta = {beta})"));
    r.require(0.5 - theta > STRICT_MARGIN, || {
        format!("theta < 1/2 fails (theta = {theta})")
    });
    r.require(
        alpha > 1.0 && theta - 1.0 / (alpha - 1.0) > STRICT_MARGIN,
        || format!("theta > 1/(alpha-1) fails (theta = {theta}, alpha = {alpha})"),
    );
    let ceiling = params.scaling_ceiling();
    let sup = r.sup_log_derivative;
    r.require(r.margin_c2 > STRICT_MARGIN, || {
        format!("sup t*delta'/delta < (1-2theta)/theta fails ({sup} >= {ceiling})")
    });
    r.require(scaling.is_positive_from(params.t0), || {
        String::from("delta(t) > 0 fails on [t0, inf)")
    });
    r.require(scaling.is_nondecreasing_from(params.t0), || {
        String::from("delta nondecreasing fails")
    });
    r.require(problem.lipschitz_bound().is_some(), || {
        String::from("gradient Lipschitz constant not provided")
    });
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtin_problem;
    use proptest::prelude::*;

    fn reference_fixture() -> SystemParams {
        SystemParams::new(8.0, 10.0, 1.0 / 6.0, 1.0).unwrap()
    }

    fn tn(n: f64) -> TimeScaling {
        TimeScaling::power(1.0, n).unwrap()
    }

    fn log_grid(t0: f64, span: f64, count: usize) -> impl Iterator<Item = f64> {
        (0..count).map(move |k| t0 * span.powf(k as f64 / (count - 1) as f64))
    }

    #[test]
    fn power_family_evaluators() {
        let s = TimeScaling::power(3.0, 2.5).unwrap();
        let t: f64 = 1.7;
        assert!((s.delta(t) - 3.0 * t.powf(2.5)).abs() < 1e-12);
        assert!((s.delta_dot(t) - 7.5 * t.powf(1.5)).abs() < 1e-12);
        assert_eq!(s.log_derivative(t), 2.5);
        assert_eq!(TimeScaling::constant().delta_dot(5.0), 0.0);
        assert!(TimeScaling::power(0.0, 1.0).is_err());
        assert!(TimeScaling::power(1.0, -1.0).is_err());
    }

    #[test]
    fn sigma_examples() {
        let p = reference_fixture();
        assert!((sigma(&p, &tn(2.0), 2.0).unwrap() - 8.0).abs() < 1e-12);
        let half = SystemParams::new(3.0, 0.0, 0.5, 1.0).unwrap();
        for t in [1.0, 3.0, 1e3] {
            assert_eq!(sigma(&half, &TimeScaling::constant(), t).unwrap(), 0.0);
            assert!((sigma(&p, &TimeScaling::constant(), t).unwrap() - 4.0).abs() < 1e-12);
        }
        assert!(matches!(
            sigma(&p, &tn(1.0), 0.5),
            Err(Error::TimeBeforeStart { .. })
        ));
    }

    #[test]
    fn xi_examples() {
        assert!((xi(&reference_fixture()) - 1.0 / 6.0).abs() < 1e-15);
        let p = SystemParams::new(5.0, 0.0, 0.25, 1.0).unwrap();
        assert_eq!(xi(&p), 0.0);
        let p = SystemParams::new(7.0, 0.0, 1.0 / 6.0, 1.0).unwrap();
        assert!(xi(&p).abs() < 1e-15);
    }

    #[test]
    fn params_reject_invalid_values() {
        assert!(SystemParams::new(8.0, 10.0, 1.0 / 6.0, 0.0).is_err());
        assert!(SystemParams::new(8.0, -1.0, 1.0 / 6.0, 1.0).is_err());
        assert!(SystemParams::new(8.0, 1.0, 0.0, 1.0).is_err());
        assert!(SystemParams::new(8.0, 1.0, 0.6, 1.0).is_err());
        assert!(SystemParams::new(f64::NAN, 1.0, 0.2, 1.0).is_err());
    }

    #[test]
    fn assumption_3_1_examples() {
        let r = validate_assumption_3_1(&reference_fixture(), &tn(3.0));
        assert!(r.satisfied, "{r}");
        assert!(r.alpha_bound_holds);
        let r = validate_assumption_3_1(&reference_fixture(), &tn(5.0));
        assert!(!r.satisfied);
        assert!(r.messages.iter().any(|m| m.contains("sup t*delta'/delta")));
        let boundary = SystemParams::new(3.0, 0.0, 0.5, 1.0).unwrap();
        let r = validate_assumption_3_1(&boundary, &TimeScaling::constant());
        assert!(r.satisfied, "{r}");
        let r = validate_assumption_3_1(&SystemParams::new(2.5, 0.0, 0.5, 1.0).unwrap(), &tn(0.0));
        assert!(!r.satisfied);
    }

    #[test]
    fn assumption_4_1_examples() {
        let q = builtin_problem("quadratic_example").unwrap();
        let r = validate_assumption_4_1(&reference_fixture(), &tn(2.0), &q);
        assert!(r.satisfied, "{r}");
        assert!((r.margin_c2 - 2.0).abs() < 1e-12);
        let half = SystemParams::new(8.0, 10.0, 0.5, 1.0).unwrap();
        let r = validate_assumption_4_1(&half, &TimeScaling::constant(), &q);
        assert!(!r.satisfied);
        assert!(r.messages.iter().any(|m| m.contains("theta < 1/2")));
        let r = validate_assumption_4_1(&reference_fixture(), &tn(4.0), &q);
        assert!(!r.satisfied);
    }

    #[test]
    fn assumption_4_1_needs_lipschitz_and_monotone_delta() {
        let q = builtin_problem("quadratic_example").unwrap();
        let bare = ConstrainedProblem::new(
            alloc::sync::Arc::new(crate::problem::LogisticExample),
            q.a().clone(),
            q.b().clone(),
            None,
        )
        .unwrap();
        let r = validate_assumption_4_1(&reference_fixture(), &tn(1.0), &bare);
        assert!(!r.satisfied);
        let shrinking = TimeScaling::Custom(CustomScaling::new(
            "2 - 1/t",
            |t| 2.0 - 1.0 / t,
            |t| 1.0 / (t * t),
        ));
        assert!(validate_assumption_4_1(&reference_fixture(), &shrinking, &q).satisfied);
        let decaying = TimeScaling::Custom(CustomScaling::new("1 + 1/t", |t| 1.0 + 1.0 / t, |t| -1.0 / (t * t)));
        let r = validate_assumption_4_1(&reference_fixture(), &decaying, &q);
        assert!(!r.satisfied);
        assert!(r.messages.iter().any(|m| m.contains("nondecreasing")));
    }

    #[test]
    fn custom_scaling_sup_is_estimated_on_grid() {
        let s = TimeScaling::Custom(CustomScaling::new("t^2", |t| t * t, |t| 2.0 * t));
        assert!((s.sup_log_derivative(1.0) - 2.0).abs() < 1e-12);
        let p = reference_fixture();
        assert!(validate_assumption_3_1(&p, &s).satisfied);
    }

    #[test]
    fn labels() {
        assert_eq!(TimeScaling::constant().label(), "1");
        assert_eq!(tn(1.0).label(), "t");
        assert_eq!(tn(3.0).label(), "t^3");
        assert_eq!(TimeScaling::power(2.0, 2.0).unwrap().label(), "2*t^2");
    }

    proptest! {
        #[test]
        fn power_sigma_closed_form(
            theta in 0.01f64..0.5,
            n in 0.0f64..6.0,
            delta0 in 0.1f64..10.0,
            t in 1.0f64..100.0,
        ) {
            let p = SystemParams::new(8.0, 1.0, theta, 1.0).unwrap();
            let s = TimeScaling::power(delta0, n).unwrap();
            let closed = ((1.0 - 2.0 * theta) / theta - n) * delta0 * t.powf(n);
            let generic = sigma(&p, &s, t).unwrap();
            prop_assert!((generic - closed).abs() <= 1e-10 * closed.abs().max(1.0));
        }

        #[test]
        fn admissible_configurations_have_nonnegative_sigma(
            alpha in 3.0f64..20.0,
            frac in 0.0f64..=1.0,
            nfrac in 0.0f64..=1.0,
            t0 in 0.1f64..5.0,
        ) {
            let lo = 1.0 / (alpha - 1.0);
            let theta = lo + frac * (0.5 - lo);
            let p = SystemParams::new(alpha, 0.5, theta, t0).unwrap();
            let n = nfrac * p.scaling_ceiling();
            let s = TimeScaling::power(1.0, n).unwrap();
            let q = builtin_problem("quadratic_example").unwrap();
            let r3 = validate_assumption_3_1(&p, &s);
            prop_assert!(r3.satisfied, "{}", r3);
            for t in log_grid(t0, 1e4, 400) {
                prop_assert!(sigma(&p, &s, t).unwrap() >= -1e-9 * s.delta(t));
            }
            let r4 = validate_assumption_4_1(&p, &s, &q);
            if r4.satisfied {
                for t in log_grid(t0, 1e4, 400) {
                    let sg = sigma(&p, &s, t).unwrap();
                    // σ is a difference of two terms of size ceiling·δ
                    prop_assert!(r4.margin_c2 * s.delta(t) <= sg + 1e-12 * p.scaling_ceiling() * s.delta(t));
                }
            }
        }

        #[test]
        fn strict_check_implies_nonstrict(
            alpha in 1.5f64..12.0,
            theta in 0.01f64..=0.5,
            n in 0.0f64..8.0,
        ) {
            let p = SystemParams::new(alpha, 1.0, theta, 1.0).unwrap();
            let s = TimeScaling::power(1.0, n).unwrap();
            let q = builtin_problem("logistic_example").unwrap();
            if validate_assumption_4_1(&p, &s, &q).satisfied {
                prop_assert!(validate_assumption_3_1(&p, &s).satisfied);
            }
        }
    }
}
