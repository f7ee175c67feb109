use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{bail, Context, Result};
use pdflow::diagnostics::{bound_curves, run_checks, CheckInputs, CheckOutcome, DiagnosticsRecord, Quantity};
use pdflow::dynamics::PrimalDualState;
use pdflow::experiment::{Experiment, RunOutput, SADDLE_TOL};
use pdflow::integrate::Termination;
use pdflow::kkt::solve_saddle_point;
use pdflow::scaling::{validate_assumption_3_1, validate_assumption_4_1};
use serde::Serialize;

use crate::config::{scaling_tag, Config, Overrides, Plan};
use crate::svg::{self, Series};
use crate::table;

pub const EXIT_OK: u8 = 0;
/// Some applicable check that is not a pointwise bound failed.
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_ASSUMPTION: u8 = 2;
pub const EXIT_INTEGRATION: u8 = 3;
pub const EXIT_BOUND: u8 = 5;
pub const EXIT_USAGE: u8 = 64;

const PANELS: [Quantity; 6] = [
    Quantity::Gap,
    Quantity::Feas,
    Quantity::Fgap,
    Quantity::GradRes,
    Quantity::DualRes,
    Quantity::Vel,
];

pub fn validate(config: &Config) -> Result<u8> {
    let plan = config.resolve(&Overrides::default())?;
    let mut code = EXIT_OK;
    for e in &plan.experiments {
        let basic = validate_assumption_3_1(&e.params, &e.scaling);
        let strict = validate_assumption_4_1(&e.params, &e.scaling, &e.problem);
        println!("delta = {}", e.scaling.label());
        print!("  energy and rate conditions: {basic}");
        print!("  strict conditions: {strict}");
        if !basic.satisfied {
            code = EXIT_ASSUMPTION;
        }
    }
    Ok(code)
}

/// `Some(exit code)` when a run must not start.
fn gate(plan: &Plan, force: bool) -> Option<u8> {
    let mut violated = false;
    for e in &plan.experiments {
        let report = validate_assumption_3_1(&e.params, &e.scaling);
        if !report.satisfied {
            violated = true;
            if force {
                eprint!("warning: running anyway, delta = {}: {report}", e.scaling.label());
            } else {
                eprint!("delta = {}: {report}", e.scaling.label());
            }
        }
    }
    (violated && !force).then_some(EXIT_ASSUMPTION)
}

/// Runs every experiment of the plan, concurrently.
fn run_all(plan: &Plan) -> Result<Vec<RunOutput>> {
    let results: Vec<Result<RunOutput>> = thread::scope(|s| {
        let handles: Vec<_> = plan
            .experiments
            .iter()
            .map(|e| s.spawn(move || e.run().map_err(anyhow::Error::from)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| bail!("worker thread panicked")))
            .collect()
    });
    results.into_iter().collect()
}

fn report_termination(e: &Experiment, out: &RunOutput) -> bool {
    let traj = &out.trajectory;
    if traj.termination == Termination::ReachedTEnd {
        println!(
            "delta = {}: {} steps ({} rejected), reached t = {}",
            e.scaling.label(),
            traj.stats.accepted_steps,
            traj.stats.rejected_steps,
            traj.last().t
        );
        true
    } else {
        eprintln!(
            "delta = {}: integration stopped at t = {} ({}); at least {:.3e} steps are needed against a budget of {}",
            e.scaling.label(),
            traj.last().t,
            traj.termination.as_str(),
            traj.stats.estimated_min_steps,
            e.config.max_steps
        );
        false
    }
}

fn csv_path(plan: &Plan, e: &Experiment) -> PathBuf {
    plan.csv_dir.join(format!("{}_{}.csv", plan.problem_name, scaling_tag(&e.scaling)))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot write {}", path.display()))?,
    ))
}

pub fn run(plan: &Plan, force: bool) -> Result<u8> {
    if let Some(code) = gate(plan, force) {
        return Ok(code);
    }
    let outputs = run_all(plan)?;
    let mut all_done = true;
    let mut series = Vec::new();
    for (i, (e, out)) in plan.experiments.iter().zip(&outputs).enumerate() {
        if !report_termination(e, out) {
            all_done = false;
            continue;
        }
        let bounds = bound_curves(&out.records, &out.saddle, &e.params, &e.scaling)?;
        let path = csv_path(plan, e);
        table::write_csv(create(&path)?, &out.records, &bounds, &out.trajectory.samples)?;
        println!("  wrote {}", path.display());
        series.push((i, e.scaling.label(), &out.records));
    }
    for q in PANELS {
        let lines: Vec<Series<'_>> = series
            .iter()
            .map(|(i, label, records)| Series {
                label: format!("delta = {label}"),
                points: records.iter().map(|r| (r.t, q.of(r))).collect(),
                dashed: false,
                color: svg::palette(*i),
            })
            .collect();
        let path = plan.svg_dir.join(format!("{}_{}.svg", plan.problem_name, q.name()));
        let doc = svg::render(&format!("{} ({})", q.name(), plan.problem_name), "t", &lines);
        fs::create_dir_all(&plan.svg_dir).with_context(|| format!("cannot create {}", plan.svg_dir.display()))?;
        fs::write(&path, doc).with_context(|| format!("cannot write {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(if all_done { EXIT_OK } else { EXIT_INTEGRATION })
}

#[derive(Debug, Serialize)]
struct Entry {
    pass: bool,
    applicable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    slope: Option<f64>,
    detail: String,
}

fn checks_from_samples(
    e: &Experiment,
    records: &[DiagnosticsRecord],
    states: &[PrimalDualState],
) -> Result<Vec<CheckOutcome>> {
    let saddle = solve_saddle_point(&e.problem, SADDLE_TOL)?;
    let last = states.last().context("no samples")?;
    let tolerance_scale = e.config.atol + e.config.rtol * last.to_flat().norm();
    Ok(run_checks(&CheckInputs {
        problem: &e.problem,
        params: &e.params,
        scaling: &e.scaling,
        saddle: &saddle,
        records,
        states,
        tolerance_scale,
    }))
}

/// Checks either fresh runs or, when `csvs` is nonempty, the samples stored by
/// an earlier `run`, one file per configured scaling in order.
pub fn rates(plan: &Plan, csvs: &[PathBuf], force: bool) -> Result<u8> {
    if let Some(code) = gate(plan, force) {
        return Ok(code);
    }
    let n = plan.experiments.len();
    let mut per_run: Vec<Vec<CheckOutcome>> = Vec::with_capacity(n);
    let mut integration_failed = false;
    if csvs.is_empty() {
        for (e, out) in plan.experiments.iter().zip(run_all(plan)?) {
            if report_termination(e, &out) {
                per_run.push(out.checks);
            } else {
                integration_failed = true;
                per_run.push(Vec::new());
            }
        }
    } else {
        if csvs.len() != n {
            bail!("{} CSV files given for {n} configured scalings", csvs.len());
        }
        for (e, path) in plan.experiments.iter().zip(csvs) {
            let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
            let (records, states) = table::read_csv(file).with_context(|| format!("in {}", path.display()))?;
            if records[0].t != e.params.t0 {
                bail!("{} starts at t = {}, the config at t0 = {}", path.display(), records[0].t, e.params.t0);
            }
            per_run.push(checks_from_samples(e, &records, &states)?);
        }
    }

    let mut verdict = BTreeMap::new();
    let (mut bound_failed, mut check_failed) = (false, false);
    for (e, checks) in plan.experiments.iter().zip(&per_run) {
        let prefix = if n > 1 {
            format!("{}/", scaling_tag(&e.scaling))
        } else {
            String::new()
        };
        if checks.is_empty() {
            verdict.insert(
                format!("{prefix}integration"),
                Entry {
                    pass: false,
                    applicable: true,
                    slope: None,
                    detail: String::from("integration did not reach t_end"),
                },
            );
            continue;
        }
        for c in checks {
            let failed = c.applicable && !c.passed;
            bound_failed |= failed && c.is_bound;
            check_failed |= failed;
            println!(
                "{:<5} {prefix}{}: {}",
                if !c.applicable {
                    "n/a"
                } else if c.passed {
                    "PASS"
                } else {
                    "FAIL"
                },
                c.name,
                c.detail
            );
            verdict.insert(
                format!("{prefix}{}", c.name),
                Entry {
                    pass: c.passed,
                    applicable: c.applicable,
                    slope: c.slope,
                    detail: c.detail.clone(),
                },
            );
        }
    }
    let path = plan.csv_dir.join("verdict.json");
    let mut text = serde_json::to_string_pretty(&verdict)?;
    text.push('\n');
    fs::create_dir_all(&plan.csv_dir).with_context(|| format!("cannot create {}", plan.csv_dir.display()))?;
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(if integration_failed {
        EXIT_INTEGRATION
    } else if bound_failed {
        EXIT_BOUND
    } else if check_failed {
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    })
}
