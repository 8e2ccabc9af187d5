//! CSV outputs of the harness.
//!
//! | file | header |
//! |------|--------|
//! | `trace.csv` | `qi,policy,run,n_scheduled,total_power_w,violated,sq_error,objective,agents` |
//! | `summary.csv` | `policy,qi,n_scheduled,total_power_w,violation_prob,rmse,objective` |
//! | `mrmse.csv` | `policy,mrmse` |
//! | `fleet.csv` | `run,id,kind,x,y,var_1,var_2,ap_distance` |
//!
//! Reals are written with 9 significant digits, `violated` as `0`/`1`, and
//! `agents` as scheduled ids joined by `;` in pick order.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scheduler::PolicyKind;
use crate::sensing::Fleet;

use super::config::SimConfig;
use super::harness::{AggregateMetrics, MonteCarlo, QIRecord};

pub const TRACE_HEADER: [&str; 9] = [
    "qi",
    "policy",
    "run",
    "n_scheduled",
    "total_power_w",
    "violated",
    "sq_error",
    "objective",
    "agents",
];
pub const SUMMARY_HEADER: [&str; 7] = [
    "policy",
    "qi",
    "n_scheduled",
    "total_power_w",
    "violation_prob",
    "rmse",
    "objective",
];
pub const MRMSE_HEADER: [&str; 2] = ["policy", "mrmse"];
pub const FLEET_HEADER: [&str; 8] = ["run", "id", "kind", "x", "y", "var_1", "var_2", "ap_distance"];

/// Formats like C's `%.9g`.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let m = trim_zeros(mantissa.to_string());
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| Error::io(path, e))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn emit_csv(records: &[QIRecord], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let err = |e| Error::io(path, e);
    w.write_record(TRACE_HEADER).map_err(err)?;
    for r in records {
        let agents = r.agents.iter().map(|id| id.to_string()).collect::<Vec<_>>().join(";");
        w.write_record([
            r.qi.to_string(),
            r.policy.to_string(),
            r.run.to_string(),
            r.n_scheduled.to_string(),
            fmt_sig9(r.total_power),
            u8::from(r.violated).to_string(),
            fmt_sig9(r.sq_error),
            fmt_sig9(r.objective),
            agents,
        ])
        .map_err(err)?;
    }
    finish(w, path)
}

pub fn emit_summary(agg: &AggregateMetrics, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let err = |e| Error::io(path, e);
    w.write_record(SUMMARY_HEADER).map_err(err)?;
    for a in &agg.per_qi {
        w.write_record([
            a.policy.to_string(),
            a.qi.to_string(),
            fmt_sig9(a.n_scheduled),
            fmt_sig9(a.total_power),
            fmt_sig9(a.violation_prob),
            fmt_sig9(a.rmse),
            fmt_sig9(a.objective),
        ])
        .map_err(err)?;
    }
    finish(w, path)
}

pub fn emit_mrmse(agg: &AggregateMetrics, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let err = |e| Error::io(path, e);
    w.write_record(MRMSE_HEADER).map_err(err)?;
    for (p, v) in &agg.mrmse {
        w.write_record([p.to_string(), fmt_sig9(*v)]).map_err(err)?;
    }
    finish(w, path)
}

pub fn emit_fleets(fleets: &[Fleet], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let err = |e| Error::io(path, e);
    w.write_record(FLEET_HEADER).map_err(err)?;
    for (run, fleet) in fleets.iter().enumerate() {
        for a in &fleet.agents {
            w.write_record([
                run.to_string(),
                a.id.to_string(),
                a.kind.as_str().to_string(),
                fmt_sig9(a.location.x),
                fmt_sig9(a.location.y),
                fmt_sig9(a.meas_cov[(0, 0)]),
                fmt_sig9(a.meas_cov[(1, 1)]),
                fmt_sig9(a.ap_distance),
            ])
            .map_err(err)?;
        }
    }
    finish(w, path)
}

/// Writes `trace.csv`, `summary.csv`, `mrmse.csv`, `fleet.csv` and
/// `config.resolved` into `dir`, creating it if needed.
pub fn write_outputs(cfg: &SimConfig, mc: &MonteCarlo, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    emit_csv(&mc.records, &dir.join("trace.csv"))?;
    emit_summary(&mc.aggregate, &dir.join("summary.csv"))?;
    emit_mrmse(&mc.aggregate, &dir.join("mrmse.csv"))?;
    emit_fleets(&mc.fleets, &dir.join("fleet.csv"))?;
    let resolved = dir.join("config.resolved");
    File::create(&resolved)
        .and_then(|mut f| f.write_all(cfg.to_toml_string().as_bytes()))
        .map_err(|e| Error::io(&resolved, e))
}

/// Reads a `trace.csv` back.
pub fn parse_trace(path: &Path) -> Result<Vec<QIRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::io(path, e))?;
    let header = rdr.headers().map_err(|e| Error::io(path, e))?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(Error::io(path, format!("unexpected header {header:?}")));
    }
    let bad = |line: usize, what: &str| Error::io(path, format!("line {line}: bad {what}"));
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::io(path, e))?;
        let line = i + 2;
        let num = |j: usize| row[j].parse::<f64>().map_err(|_| bad(line, TRACE_HEADER[j]));
        let int = |j: usize| row[j].parse::<usize>().map_err(|_| bad(line, TRACE_HEADER[j]));
        let agents = if row[8].is_empty() {
            Vec::new()
        } else {
            row[8]
                .split(';')
                .map(|s| s.parse::<usize>().map_err(|_| bad(line, "agents")))
                .collect::<Result<_>>()?
        };
        out.push(QIRecord {
            qi: int(0)?,
            policy: row[1].parse::<PolicyKind>().map_err(|_| bad(line, "policy"))?,
            run: int(2)?,
            n_scheduled: int(3)?,
            total_power: num(4)?,
            violated: match &row[5] {
                "0" => false,
                "1" => true,
                _ => return Err(bad(line, "violated")),
            },
            sq_error: num(6)?,
            objective: num(7)?,
            agents,
        });
    }
    Ok(out)
}
