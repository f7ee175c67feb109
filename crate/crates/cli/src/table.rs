//! CSV time series. Numbers use the shortest representation that parses back
//! to the same `f64`, so files are byte-for-byte reproducible and a file read
//! back gives exactly the samples that were written.

use std::io::{Read, Write};

use anyhow::{anyhow, bail, Context, Result};
use pdflow::diagnostics::DiagnosticsRecord;
use pdflow::dynamics::PrimalDualState;
use pdflow::DVector;

const RECORD_COLUMNS: [&str; 15] = [
    "t",
    "gap",
    "feas",
    "fgap",
    "vel",
    "energy",
    "grad_res",
    "dual_res",
    "gap_aug",
    "w",
    "phi",
    "sigma",
    "dual_speed",
    "dual_dist",
    "dual_drift",
];

const BOUND_COLUMNS: [&str; 3] = ["bound_gap", "bound_feas", "bound_fgap"];

fn record_values(r: &DiagnosticsRecord) -> [f64; 15] {
    [
        r.t,
        r.gap,
        r.feas,
        r.fgap,
        r.vel,
        r.energy,
        r.grad_res,
        r.dual_res,
        r.gap_aug,
        r.w_value,
        r.phi_value,
        r.sigma_value,
        r.dual_speed,
        r.dual_dist,
        r.dual_drift,
    ]
}

fn header(n: usize, m: usize) -> Vec<String> {
    // the bound columns sit right after dual_res
    let names = &RECORD_COLUMNS;
    let mut h: Vec<String> = names[..8].iter().map(|s| s.to_string()).collect();
    h.extend(BOUND_COLUMNS.iter().map(|s| s.to_string()));
    h.extend(names[8..].iter().map(|s| s.to_string()));
    for (prefix, len) in [("x", n), ("lambda", m), ("vx", n), ("vlambda", m)] {
        h.extend((1..=len).map(|i| format!("{prefix}{i}")));
    }
    h
}

pub fn format_number(v: f64) -> String {
    format!("{v:e}")
}

/// Writes one row per sample: diagnostics, the three bound curves, then the
/// state `(x, λ, ẋ, λ̇)`.
pub fn write_csv<W: Write>(
    out: W,
    records: &[DiagnosticsRecord],
    bounds: &[[f64; 3]],
    states: &[PrimalDualState],
) -> Result<()> {
    if records.len() != states.len() || records.len() != bounds.len() {
        bail!("records, bounds and states differ in length");
    }
    let (n, m) = states
        .first()
        .map(|s| (s.x.len(), s.lambda.len()))
        .ok_or_else(|| anyhow!("no samples to write"))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header(n, m))?;
    for ((r, b), s) in records.iter().zip(bounds).zip(states) {
        let v = record_values(r);
        let row = v[..8]
            .iter()
            .chain(b)
            .chain(&v[8..])
            .chain(s.x.iter())
            .chain(s.lambda.iter())
            .chain(s.vx.iter())
            .chain(s.vlambda.iter())
            .map(|x| format_number(*x));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_csv`]. Bound columns are ignored; they are
/// recomputed from the samples.
pub fn read_csv<R: Read>(input: R) -> Result<(Vec<DiagnosticsRecord>, Vec<PrimalDualState>)> {
    let mut rd = csv::ReaderBuilder::new().from_reader(input);
    let head: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    let col = |name: &str| {
        head.iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("missing column `{name}`"))
    };
    let count = |prefix: &str| {
        (1..)
            .take_while(|i| head.iter().any(|h| *h == format!("{prefix}{i}")))
            .count()
    };
    let (n, m) = (count("x"), count("lambda"));
    if n == 0 || m == 0 || count("vx") != n || count("vlambda") != m {
        bail!("state columns are missing or inconsistent");
    }
    let rec_idx: Vec<usize> = RECORD_COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let block = |prefix: &str, len: usize| -> Result<Vec<usize>> {
        (1..=len).map(|i| col(&format!("{prefix}{i}"))).collect()
    };
    let blocks = [block("x", n)?, block("lambda", m)?, block("vx", n)?, block("vlambda", m)?];

    let mut records = Vec::new();
    let mut states = Vec::new();
    for (line, row) in rd.records().enumerate() {
        let row = row?;
        let get = |i: usize| -> Result<f64> {
            let cell = row.get(i).ok_or_else(|| anyhow!("row {} is short", line + 2))?;
            cell.trim()
                .parse::<f64>()
                .with_context(|| format!("row {}: bad number `{cell}`", line + 2))
        };
        let v: Vec<f64> = rec_idx.iter().map(|&i| get(i)).collect::<Result<_>>()?;
        records.push(DiagnosticsRecord {
            t: v[0],
            gap: v[1],
            feas: v[2],
            fgap: v[3],
            vel: v[4],
            energy: v[5],
            grad_res: v[6],
            dual_res: v[7],
            gap_aug: v[8],
            w_value: v[9],
            phi_value: v[10],
            sigma_value: v[11],
            dual_speed: v[12],
            dual_dist: v[13],
            dual_drift: v[14],
        });
        let vec = |idx: &[usize]| -> Result<DVector<f64>> {
            Ok(DVector::from_vec(idx.iter().map(|&i| get(i)).collect::<Result<_>>()?))
        };
        states.push(PrimalDualState {
            t: v[0],
            x: vec(&blocks[0])?,
            lambda: vec(&blocks[1])?,
            vx: vec(&blocks[2])?,
            vlambda: vec(&blocks[3])?,
        });
    }
    if records.is_empty() {
        bail!("no data rows");
    }
    Ok((records, states))
}
