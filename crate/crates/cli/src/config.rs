use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pdflow::dynamics::PrimalDualState;
use pdflow::experiment::{
    reference_initial_state, Experiment, DEFAULT_SAMPLES, DEFAULT_T_END, REFERENCE_ALPHA, REFERENCE_BETA,
    REFERENCE_EXPONENTS, REFERENCE_T0, REFERENCE_THETA,
};
use pdflow::integrate::IntegratorConfig;
use pdflow::problem::{builtin_problem, ConstrainedProblem};
use pdflow::scaling::{SystemParams, TimeScaling};
use pdflow::DVector;
use serde::{Deserialize, Serialize};

/// Every key except `problem` falls back to the reference setup: α = 8,
/// β = 10, θ = 1/6, t₀ = 1, t_end = 100, the four scalings 1, t, t², t³ and
/// the reference initial data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: String,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_delta")]
    pub delta: DeltaField,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub initial: Option<InitialSection>,
    #[serde(default)]
    pub outputs: OutputsSection,
}

fn default_alpha() -> f64 {
    REFERENCE_ALPHA
}
fn default_beta() -> f64 {
    REFERENCE_BETA
}
fn default_theta() -> f64 {
    REFERENCE_THETA
}
fn default_t0() -> f64 {
    REFERENCE_T0
}
fn default_t_end() -> f64 {
    DEFAULT_T_END
}
fn default_delta() -> DeltaField {
    DeltaField::Many(
        REFERENCE_EXPONENTS
            .iter()
            .map(|&n| DeltaSpec {
                family: Family::Power,
                delta0: 1.0,
                n,
            })
            .collect(),
    )
}

/// A single scaling or a list of them; a list is swept.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaField {
    One(DeltaSpec),
    Many(Vec<DeltaSpec>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Power,
    Constant,
}

/// `δ(t) = δ₀tⁿ`; `constant` means `n = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaSpec {
    pub family: Family,
    #[serde(default = "one")]
    pub delta0: f64,
    #[serde(default)]
    pub n: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub h0: Option<f64>,
    pub h_max: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub vx: Vec<f64>,
    pub vlambda: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    pub csv_dir: Option<PathBuf>,
    pub svg_dir: Option<PathBuf>,
}

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub t_end: Option<f64>,
    pub samples: Option<usize>,
    pub out: Option<PathBuf>,
}

/// A config resolved into ready-to-run experiments, one per scaling.
#[derive(Debug, Clone)]
pub struct Plan {
    pub problem_name: String,
    pub experiments: Vec<Experiment>,
    pub csv_dir: PathBuf,
    pub svg_dir: PathBuf,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// The reference sweep on a builtin problem.
    pub fn preset(problem: &str) -> Self {
        serde_json::from_value(serde_json::json!({ "problem": problem })).expect("preset is valid")
    }

    pub fn scalings(&self) -> Result<Vec<TimeScaling>> {
        let specs = match &self.delta {
            DeltaField::One(s) => std::slice::from_ref(s),
            DeltaField::Many(v) => v.as_slice(),
        };
        if specs.is_empty() {
            bail!("delta list is empty");
        }
        specs
            .iter()
            .map(|s| {
                if s.family == Family::Constant && s.n != 0.0 {
                    bail!("constant delta takes no exponent (n = {})", s.n);
                }
                TimeScaling::power(s.delta0, s.n).map_err(anyhow::Error::from)
            })
            .collect()
    }

    pub fn resolve(&self, overrides: &Overrides) -> Result<Plan> {
        let problem = builtin_problem(&self.problem)?;
        let params = SystemParams::new(self.alpha, self.beta, self.theta, self.t0)?;
        let initial = self.initial_state(&problem)?;
        let defaults = IntegratorConfig::default();
        let i = &self.integrator;
        let config = IntegratorConfig {
            rtol: i.rtol.unwrap_or(defaults.rtol),
            atol: i.atol.unwrap_or(defaults.atol),
            h0: i.h0.unwrap_or(defaults.h0),
            h_max: i.h_max.unwrap_or(defaults.h_max),
            max_steps: i.max_steps.unwrap_or(defaults.max_steps),
        };
        config.validate()?;
        let t_end = overrides.t_end.unwrap_or(self.t_end);
        if !(t_end > self.t0 && t_end.is_finite()) {
            bail!("t_end = {t_end} must exceed t0 = {}", self.t0);
        }
        let samples = overrides.samples.or(self.sampling.count).unwrap_or(DEFAULT_SAMPLES);
        if samples < 2 {
            bail!("sampling count must be at least 2");
        }
        let experiments = self
            .scalings()?
            .into_iter()
            .map(|scaling| Experiment {
                problem: problem.clone(),
                params,
                scaling,
                initial: initial.clone(),
                t_end,
                samples,
                config,
            })
            .collect();
        let base = PathBuf::from("pdflow-out");
        let (csv_dir, svg_dir) = match &overrides.out {
            Some(out) => (out.clone(), out.clone()),
            None => (
                self.outputs.csv_dir.clone().unwrap_or_else(|| base.clone()),
                self.outputs.svg_dir.clone().unwrap_or(base),
            ),
        };
        Ok(Plan {
            problem_name: self.problem.clone(),
            experiments,
            csv_dir,
            svg_dir,
        })
    }

    fn initial_state(&self, problem: &ConstrainedProblem) -> Result<PrimalDualState> {
        let state = match &self.initial {
            None => reference_initial_state(self.t0),
            Some(s) => PrimalDualState {
                t: self.t0,
                x: DVector::from_vec(s.x.clone()),
                lambda: DVector::from_vec(s.lambda.clone()),
                vx: DVector::from_vec(s.vx.clone()),
                vlambda: DVector::from_vec(s.vlambda.clone()),
            },
        };
        state.check_dims(problem)?;
        Ok(state)
    }
}

/// File-name fragment for a scaling: `delta_t2`, `delta_0.5t1`.
pub fn scaling_tag(scaling: &TimeScaling) -> String {
    match scaling {
        TimeScaling::Power { delta0, exponent } if *delta0 == 1.0 => format!("delta_t{exponent}"),
        TimeScaling::Power { delta0, exponent } => format!("delta_{delta0}t{exponent}"),
        TimeScaling::Custom(c) => format!("delta_{}", c.label),
    }
}
