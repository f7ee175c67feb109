//! Reference configuration and a one-call driver that integrates, records
//! diagnostics and runs every check.

use alloc::vec::Vec;

use nalgebra::DVector;

use crate::diagnostics::{run_checks, CheckInputs, CheckOutcome, DiagnosticsRecord, Setup};
use crate::dynamics::PrimalDualState;
use crate::error::Result;
use crate::integrate::{integrate, log_sample_grid, IntegratorConfig, Trajectory};
use crate::kkt::solve_saddle_point;
use crate::problem::{ConstrainedProblem, SaddlePoint};
use crate::scaling::{validate_assumption_3_1, validate_assumption_4_1, AssumptionReport, SystemParams, TimeScaling};

pub const REFERENCE_ALPHA: f64 = 8.0;
pub const REFERENCE_BETA: f64 = 10.0;
pub const REFERENCE_THETA: f64 = 1.0 / 6.0;
pub const REFERENCE_T0: f64 = 1.0;
pub const DEFAULT_T_END: f64 = 100.0;
pub const DEFAULT_SAMPLES: usize = 400;
/// Exponents `n` of the reference family `δ(t) = tⁿ`.
pub const REFERENCE_EXPONENTS: [f64; 4] = [0.0, 1.0, 2.0, 3.0];
/// KKT tolerance of the reference saddle point.
pub const SADDLE_TOL: f64 = 1e-12;

pub fn reference_params() -> SystemParams {
    SystemParams::new(REFERENCE_ALPHA, REFERENCE_BETA, REFERENCE_THETA, REFERENCE_T0)
        .expect("reference parameters are valid")
}

/// `x₀ = ẋ₀ = (½, ½, ½, ½)`, `λ₀ = (0.2, 0.2)`, `λ̇₀ = (½, ½)`.
pub fn reference_initial_state(t0: f64) -> PrimalDualState {
    PrimalDualState {
        t: t0,
        x: DVector::from_element(4, 0.5),
        lambda: DVector::from_element(2, 0.2),
        vx: DVector::from_element(4, 0.5),
        vlambda: DVector::from_element(2, 0.5),
    }
}

pub fn reference_scalings() -> Vec<TimeScaling> {
    REFERENCE_EXPONENTS
        .iter()
        .map(|&n| TimeScaling::power(1.0, n).expect("valid exponent"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub problem: ConstrainedProblem,
    pub params: SystemParams,
    pub scaling: TimeScaling,
    pub initial: PrimalDualState,
    pub t_end: f64,
    pub samples: usize,
    pub config: IntegratorConfig,
}

impl Experiment {
    /// The reference setup on `problem` with `δ(t) = tⁿ`.
    pub fn reference(problem: ConstrainedProblem, exponent: f64) -> Result<Self> {
        let params = reference_params();
        Ok(Self {
            problem,
            params,
            scaling: TimeScaling::power(1.0, exponent)?,
            initial: reference_initial_state(params.t0),
            t_end: DEFAULT_T_END,
            samples: DEFAULT_SAMPLES,
            config: IntegratorConfig::default(),
        })
    }

    pub fn assumptions(&self) -> (AssumptionReport, AssumptionReport) {
        (
            validate_assumption_3_1(&self.params, &self.scaling),
            validate_assumption_4_1(&self.params, &self.scaling, &self.problem),
        )
    }

    pub fn run(&self) -> Result<RunOutput> {
        let saddle = solve_saddle_point(&self.problem, SADDLE_TOL)?;
        self.run_with(saddle)
    }

    /// Like [`Experiment::run`] with a saddle point supplied by the caller.
    pub fn run_with(&self, saddle: SaddlePoint) -> Result<RunOutput> {
        let grid = log_sample_grid(self.params.t0, self.t_end, self.samples)?;
        let trajectory = integrate(
            &self.problem,
            &self.params,
            &self.scaling,
            &self.initial,
            self.t_end,
            &self.config,
            &grid,
        )?;
        let setup = Setup {
            problem: &self.problem,
            params: &self.params,
            scaling: &self.scaling,
            saddle: &saddle,
        };
        let records = setup.records(&trajectory)?;
        let tolerance_scale = self.config.atol + self.config.rtol * trajectory.last().to_flat().norm();
        let checks = run_checks(&CheckInputs {
            problem: &self.problem,
            params: &self.params,
            scaling: &self.scaling,
            saddle: &saddle,
            records: &records,
            states: &trajectory.samples,
            tolerance_scale,
        });
        Ok(RunOutput {
            saddle,
            trajectory,
            records,
            checks,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub saddle: SaddlePoint,
    pub trajectory: Trajectory,
    pub records: Vec<DiagnosticsRecord>,
    pub checks: Vec<CheckOutcome>,
}

impl RunOutput {
    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Applicable checks that failed.
    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| c.applicable && !c.passed)
    }
}
