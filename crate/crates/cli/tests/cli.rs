use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn pdflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdflow"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn verdict(path: &Path) -> serde_json::Map<String, Value> {
    match serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap() {
        Value::Object(m) => m,
        other => panic!("verdict is not an object: {other}"),
    }
}

#[test]
fn validate_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "t2.json", r#"{"problem": "quadratic_example", "delta": {"family": "power", "n": 2}}"#);
    write(d, "t5.json", r#"{"problem": "quadratic_example", "delta": {"family": "power", "n": 5}}"#);
    write(d, "bad.json", r#"{"problem": "quadratic_example", "delta": "#);
    assert_eq!(code(&pdflow(d, &["validate", "--config", "t2.json"])), 0);
    let out = pdflow(d, &["validate", "--config", "t5.json"]);
    assert_eq!(code(&out), 2);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("sup t*delta'/delta <= (1-2theta)/theta fails"), "{text}");
    assert_eq!(code(&pdflow(d, &["validate", "--config", "bad.json"])), 64);
    assert_eq!(code(&pdflow(d, &["validate", "--config", "missing.json"])), 64);
    assert_eq!(code(&pdflow(d, &["frobnicate"])), 64);
    assert_eq!(code(&pdflow(d, &["run"])), 64);
    assert_eq!(code(&pdflow(d, &["--help"])), 0);
}

#[test]
fn run_refuses_violated_conditions_unless_forced() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(
        d,
        "t5.json",
        r#"{"problem": "quadratic_example", "t_end": 3, "delta": {"family": "power", "n": 5}, "sampling": {"count": 20}}"#,
    );
    assert_eq!(code(&pdflow(d, &["run", "--config", "t5.json", "--out", "o"])), 2);
    assert!(!d.join("o").exists());
    let out = pdflow(d, &["run", "--config", "t5.json", "--out", "o", "--force"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert!(d.join("o/quadratic_example_delta_t5.csv").exists());
}

#[test]
fn run_is_byte_for_byte_deterministic() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(
        d,
        "c.json",
        r#"{"problem": "logistic_example", "t_end": 10, "delta": [{"family": "constant"}, {"family": "power", "n": 1}]}"#,
    );
    for out in ["a", "b"] {
        let o = pdflow(d, &["run", "--config", "c.json", "--out", out, "--samples", "60"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = fs::read_dir(d.join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 2 + 6, "{names:?}");
    for name in &names {
        assert_eq!(fs::read(d.join("a").join(name)).unwrap(), fs::read(d.join("b").join(name)).unwrap(), "{name}");
    }
    let csv = fs::read_to_string(d.join("a/logistic_example_delta_t1.csv")).unwrap();
    assert!(!csv.contains('\r'));
    assert_eq!(csv.lines().count(), 61);
    assert!(csv.starts_with(
        "t,gap,feas,fgap,vel,energy,grad_res,dual_res,bound_gap,bound_feas,bound_fgap,"
    ));
}

#[test]
fn rates_from_csv_match_a_fresh_run_and_detect_corruption() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(
        d,
        "c.json",
        r#"{"problem": "quadratic_example", "t_end": 20, "delta": {"family": "power", "n": 1}, "sampling": {"count": 150}}"#,
    );
    assert_eq!(code(&pdflow(d, &["run", "--config", "c.json", "--out", "run"])), 0);
    let csv = "run/quadratic_example_delta_t1.csv";
    let fresh = pdflow(d, &["rates", "--config", "c.json", "--out", "fresh"]);
    let stored = pdflow(d, &["rates", "--config", "c.json", "--out", "stored", "--csv", csv]);
    assert_eq!(code(&fresh), code(&stored));
    let (a, b) = (verdict(&d.join("fresh/verdict.json")), verdict(&d.join("stored/verdict.json")));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, va) in &a {
        let vb = &b[k];
        assert_eq!(va["pass"], vb["pass"], "{k}");
        if let (Some(sa), Some(sb)) = (va["slope"].as_f64(), vb["slope"].as_f64()) {
            assert!((sa - sb).abs() <= 1e-9, "{k}: {sa} vs {sb}");
        }
    }
    assert!(a["gap_bound"]["pass"].as_bool().unwrap());

    // negate the gap column
    let text = fs::read_to_string(d.join(csv)).unwrap();
    let mut lines = text.lines();
    let mut corrupted = String::from(lines.next().unwrap());
    corrupted.push('\n');
    for line in lines {
        let mut cells: Vec<String> = line.split(',').map(String::from).collect();
        cells[1] = format!("{:e}", -cells[1].parse::<f64>().unwrap());
        corrupted.push_str(&cells.join(","));
        corrupted.push('\n');
    }
    write(d, "bad.csv", &corrupted);
    let out = pdflow(d, &["rates", "--config", "c.json", "--out", "bad", "--csv", "bad.csv"]);
    assert_eq!(code(&out), 5);
    assert!(!verdict(&d.join("bad/verdict.json"))["gap_bound"]["pass"].as_bool().unwrap());

    write(d, "garbage.csv", "t,gap\n1,2\n");
    assert_eq!(code(&pdflow(d, &["rates", "--config", "c.json", "--out", "g", "--csv", "garbage.csv"])), 64);
    assert_eq!(code(&pdflow(d, &["rates", "--config", "c.json", "--out", "g", "--csv", csv, "--csv", csv])), 64);
}

#[test]
fn zero_xi_makes_the_velocity_bound_inapplicable() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(
        d,
        "xi0.json",
        r#"{"problem": "quadratic_example", "alpha": 5, "theta": 0.25, "t_end": 30, "delta": {"family": "power", "n": 1}}"#,
    );
    let out = pdflow(d, &["rates", "--config", "xi0.json", "--out", "o"]);
    let v = verdict(&d.join("o/verdict.json"));
    assert_eq!(v["velocity_bound"]["applicable"], Value::Bool(false));
    assert!(v["velocity_bound"]["detail"].as_str().unwrap().starts_with("inapplicable"));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn reference_quadratic_with_t_squared_passes_every_check() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "c.json", r#"{"problem": "quadratic_example", "delta": {"family": "power", "n": 2}}"#);
    let out = pdflow(d, &["rates", "--config", "c.json", "--out", "o"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let v = verdict(&d.join("o/verdict.json"));
    assert!(v.values().all(|e| e["pass"] == Value::Bool(true)));
    assert!(v["slope_fgap"]["slope"].as_f64().unwrap() <= -3.7);
}

#[test]
fn exhausted_step_budget_exits_3() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(
        d,
        "c.json",
        r#"{"problem": "quadratic_example", "t_end": 50, "delta": {"family": "power", "n": 2}, "integrator": {"max_steps": 1000}}"#,
    );
    let out = pdflow(d, &["run", "--config", "c.json", "--out", "o"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("step_budget_exhausted"));
    assert!(!d.join("o/quadratic_example_delta_t2.csv").exists());
    assert_eq!(code(&pdflow(d, &["rates", "--config", "c.json", "--out", "o"])), 3);
}

#[test]
fn equilibrium_start_gives_flat_curves() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(
        d,
        "c.json",
        r#"{"problem": "quadratic_example", "t_end": 10, "delta": {"family": "power", "n": 1},
            "initial": {"x": [0.8, 0.6, 0.2, 0.6], "lambda": [0.4, 1.2], "vx": [0, 0, 0, 0], "vlambda": [0, 0]}}"#,
    );
    assert_eq!(code(&pdflow(d, &["run", "--config", "c.json", "--out", "o", "--samples", "50"])), 0);
    let text = fs::read_to_string(d.join("o/quadratic_example_delta_t1.csv")).unwrap();
    for line in text.lines().skip(1) {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        // gap, feas, fgap, vel; roundoff in the saddle point is amplified up to
        // the integrator tolerance, and further in the velocities by the fast
        // rotation of the flow
        assert!(cells[1..5].iter().all(|v| v.abs() < 1e-6), "{line}");
    }
}

#[test]
fn figure_preset_writes_four_series_and_six_panels() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let out = pdflow(d, &["reproduce-figure-2", "--out", "fig", "--t-end", "5", "--samples", "40"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for n in 0..4 {
        assert!(d.join(format!("fig/logistic_example_delta_t{n}.csv")).exists());
    }
    for q in ["gap", "feas", "fgap", "grad_res", "dual_res", "vel"] {
        let svg = fs::read_to_string(d.join(format!("fig/logistic_example_{q}.svg"))).unwrap();
        assert!(svg.contains("<svg") && svg.matches("<path").count() == 4, "{q}");
    }
}
