//! CSV and JSON writers for scenario results.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::feeder::FeederModel;

use super::{ScenarioError, ScenarioSummary, StepRecord};

/// Formats like C's `%.9g`: nine significant digits, trailing zeros removed,
/// exponent notation outside [1e-4, 1e9).
pub fn format_g9(x: f64) -> String {
    const P: i32 = 9;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        strip_zeros(&format!("{:.*}", (P - 1 - exp) as usize, x)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_g9).unwrap_or_default()
}

/// Column names of the step CSV, in order.
pub fn csv_header(model: &FeederModel, convexity: bool) -> Vec<String> {
    let mut cols = vec!["step".to_string(), "time_s".to_string()];
    for bus in &model.buses {
        for p in bus.phases.iter() {
            cols.push(format!("v_{}_{}", bus.id, p.letter()));
        }
    }
    for (i, pv) in model.pvs.iter().enumerate() {
        for q in ["vref", "q0", "qpv", "qmax", "y"] {
            cols.push(format!("pv{}_{}_{q}", i, pv.bus));
        }
    }
    for reg in &model.regulators {
        let b = model.branch_index(&reg.branch).expect("validated regulator");
        for p in model.branches[b].phases.iter() {
            cols.push(format!("tap_{}_{}", reg.branch, p.letter()));
        }
    }
    cols.extend(["loss_kw", "penalty", "converged"].map(String::from));
    if convexity {
        for (i, pv) in model.pvs.iter().enumerate() {
            for q in ["cvx_d", "cvx_d2i2", "cvx_ok"] {
                cols.push(format!("pv{}_{}_{q}", i, pv.bus));
            }
        }
    }
    cols
}

/// One CSV row matching [`csv_header`].
pub fn csv_row(model: &FeederModel, rec: &StepRecord, convexity: bool) -> Vec<String> {
    let mut row = vec![rec.step.to_string(), format_g9(rec.time_s)];
    row.extend(rec.voltages.iter().flatten().map(|v| format_g9(*v)));
    for pv in &rec.pvs {
        row.push(opt(pv.v_ref));
        row.push(opt(pv.q0));
        row.push(format_g9(pv.q_pv));
        row.push(format_g9(pv.q_max));
        row.push(format_g9(pv.objective));
    }
    for (reg, taps) in model.regulators.iter().zip(&rec.taps) {
        let b = model.branch_index(&reg.branch).expect("validated regulator");
        for p in model.branches[b].phases.indices() {
            row.push(taps[p].to_string());
        }
    }
    row.push(format_g9(rec.loss_kw));
    row.push(format_g9(rec.penalty));
    row.push(u8::from(rec.converged).to_string());
    if convexity {
        match &rec.convexity {
            Some(cvx) => {
                for c in cvx {
                    row.push(format_g9(c.denominator));
                    row.push(opt(c.second_derivative));
                    row.push(u8::from(c.satisfied).to_string());
                }
            }
            None => row.extend(std::iter::repeat_n(String::new(), 3 * model.pvs.len())),
        }
    }
    row
}

/// Opens `path` for writing, refusing to replace an existing file unless `force`.
pub fn create_output(path: &Path, force: bool) -> Result<File, ScenarioError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| ScenarioError::Io(format!("{}: {e}", dir.display())))?;
        }
    }
    let mut opts = OpenOptions::new();
    opts.write(true);
    if force {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    opts.open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::AlreadyExists {
            ScenarioError::Exists(path.to_path_buf())
        } else {
            ScenarioError::Io(format!("{}: {e}", path.display()))
        }
    })
}

pub fn write_records_csv<W: Write>(
    out: W,
    model: &FeederModel,
    records: &[StepRecord],
    convexity: bool,
) -> Result<(), ScenarioError> {
    let io = |e: csv::Error| ScenarioError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(model, convexity)).map_err(io)?;
    for rec in records {
        w.write_record(csv_row(model, rec, convexity)).map_err(io)?;
    }
    w.flush().map_err(|e| ScenarioError::Io(e.to_string()))
}

pub fn records_csv_string(model: &FeederModel, records: &[StepRecord], convexity: bool) -> String {
    let mut buf = Vec::new();
    write_records_csv(&mut buf, model, records, convexity).expect("in-memory write");
    String::from_utf8(buf).expect("utf-8 csv")
}

pub fn write_summary_json<W: Write>(mut out: W, summary: &ScenarioSummary) -> Result<(), ScenarioError> {
    serde_json::to_writer_pretty(&mut out, summary).map_err(|e| ScenarioError::Io(e.to_string()))?;
    writeln!(out).map_err(|e| ScenarioError::Io(e.to_string()))
}

/// Writes `<stem>.csv` and `<stem>.json` under `dir`; returns both paths.
pub fn write_run(
    dir: &Path,
    stem: &str,
    model: &FeederModel,
    records: &[StepRecord],
    summary: &ScenarioSummary,
    convexity: bool,
    force: bool,
) -> Result<(PathBuf, PathBuf), ScenarioError> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    if !force {
        for p in [&csv_path, &json_path] {
            if p.exists() {
                return Err(ScenarioError::Exists(p.clone()));
            }
        }
    }
    let f = create_output(&csv_path, force)?;
    write_records_csv(BufWriter::new(f), model, records, convexity)?;
    let f = create_output(&json_path, force)?;
    write_summary_json(BufWriter::new(f), summary)?;
    Ok((csv_path, json_path))
}
