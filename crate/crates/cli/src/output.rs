//! CSV formats.
//!
//! Floats are written with `{:?}`, the shortest representation that parses
//! back to the same bits; undefined fields are empty.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use graddiv::conditioning::ConditioningReport;
use graddiv::diagnostics::{StepRecord, SweepRow};

pub const TIMESERIES_HEADER: [&str; 8] = [
    "n",
    "t",
    "kinetic_energy",
    "div_norm",
    "E",
    "D",
    "identity_residual",
    "load_pairing",
];

pub const SUMMARY_HEADER: [&str; 7] = [
    "gamma",
    "alpha",
    "avg_div_sq",
    "final_div",
    "rate_avg",
    "rate_final",
    "blowup_step",
];

pub const CONDITIONING_HEADER: [&str; 10] = [
    "n",
    "h",
    "k",
    "gamma_plus_alpha",
    "lambda_max",
    "lambda_min",
    "cond2",
    "bound_shape",
    "ratio",
    "converged",
];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// `{experiment}_g{γ}_a{α}.csv`
pub fn timeseries_name(experiment: &str, gamma: f64, alpha: f64) -> String {
    format!("{experiment}_g{}_a{}.csv", fmt_f64(gamma), fmt_f64(alpha))
}

pub fn summary_name(experiment: &str) -> String {
    format!("{experiment}_summary.csv")
}

pub fn timeseries_csv(records: &[StepRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TIMESERIES_HEADER)?;
    for r in records {
        w.write_record([
            r.n.to_string(),
            fmt_f64(r.t),
            fmt_f64(r.kinetic_energy),
            fmt_f64(r.div_norm),
            fmt_opt(r.energy),
            fmt_opt(r.dissipation),
            fmt_opt(r.identity_residual),
            fmt_opt(r.load_pairing),
        ])?;
    }
    Ok(w.into_inner()?)
}

pub fn summary_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            fmt_f64(r.gamma),
            fmt_f64(r.alpha),
            fmt_f64(r.avg_div_sq),
            fmt_f64(r.final_div),
            fmt_opt(r.rate_avg),
            fmt_opt(r.rate_final),
            r.blowup_step.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    Ok(w.into_inner()?)
}

pub fn conditioning_csv(rows: &[(usize, ConditioningReport)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CONDITIONING_HEADER)?;
    for (n, r) in rows {
        w.write_record([
            n.to_string(),
            fmt_f64(r.h),
            fmt_f64(r.k),
            fmt_f64(r.gamma_plus_alpha),
            fmt_f64(r.lambda_max),
            fmt_f64(r.lambda_min),
            fmt_f64(r.cond2),
            fmt_f64(r.bound_shape),
            fmt_f64(r.cond2 / r.bound_shape),
            r.converged.to_string(),
        ])?;
    }
    Ok(w.into_inner()?)
}

pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn parse_opt_f64(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        Ok(Some(s.parse::<f64>().with_context(|| format!("bad number '{s}'"))?))
    }
}

fn check_header(found: &csv::StringRecord, expected: &[&str], path: &Path) -> Result<()> {
    if found.iter().ne(expected.iter().copied()) {
        bail!("{}: unexpected header {:?}", path.display(), found.iter().collect::<Vec<_>>());
    }
    Ok(())
}

pub fn read_timeseries(path: &Path) -> Result<Vec<StepRecord>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    check_header(r.headers()?, &TIMESERIES_HEADER, path)?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let f = |i: usize| parse_opt_f64(&rec[i]).with_context(|| format!("{} row {}", path.display(), line + 1));
        out.push(StepRecord {
            n: rec[0].parse().with_context(|| format!("{} row {}", path.display(), line + 1))?,
            t: f(1)?.unwrap_or(f64::NAN),
            kinetic_energy: f(2)?.unwrap_or(f64::NAN),
            div_norm: f(3)?.unwrap_or(f64::NAN),
            div_norm_sum: None,
            energy: f(4)?,
            dissipation: f(5)?,
            identity_residual: f(6)?,
            load_pairing: f(7)?,
        });
    }
    Ok(out)
}

pub fn read_summary(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    check_header(r.headers()?, &SUMMARY_HEADER, path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| parse_opt_f64(&rec[i]);
        out.push(SweepRow {
            gamma: num(0)?.unwrap_or(f64::NAN),
            alpha: num(1)?.unwrap_or(f64::NAN),
            avg_div_sq: num(2)?.unwrap_or(f64::NAN),
            final_div: num(3)?.unwrap_or(f64::NAN),
            rate_avg: num(4)?,
            rate_final: num(5)?,
            blowup_step: if rec[6].is_empty() { None } else { Some(rec[6].parse()?) },
        });
    }
    Ok(out)
}
