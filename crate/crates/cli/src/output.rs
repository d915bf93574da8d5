//! Serialization of reports. CSV numbers carry 17 significant digits.

use serde::Serialize;

use infobound_core::{AreReport, Table1Report};

use crate::error::CliError;

/// Scientific notation with 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Serialize(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::Serialize(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Serialize(e.to_string()))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Serialize(e.to_string())
}

/// Sweep parameters, then I_star, I_full, are_ib, [sp_var, sp_ratio], residual, converged.
pub fn sweep_csv(report: &AreReport, sp: bool) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let params: Vec<String> = report.rows.first().map(|r| r.params.iter().map(|(n, _)| n.clone()).collect()).unwrap_or_default();
    let mut header = params.clone();
    header.extend(["I_star", "I_full", "are_ib"].map(String::from));
    if sp {
        header.extend(["sp_var", "sp_ratio"].map(String::from));
    }
    header.extend(["residual", "converged"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for r in &report.rows {
        let mut rec: Vec<String> = r.params.iter().map(|(_, v)| fmt_num(*v)).collect();
        rec.extend([fmt_num(r.i_star), fmt_num(r.i_full), fmt_num(r.are_ib)]);
        if sp {
            rec.extend([fmt_opt(r.sp_var), fmt_opt(r.sp_ratio)]);
        }
        rec.extend([fmt_num(r.residual), r.converged.to_string()]);
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}

/// One row per (θ, P(X=1), sensitivity, specificity); ARE columns in percent.
pub fn table1_csv(report: &Table1Report) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record([
        "theta",
        "px1",
        "sensitivity",
        "specificity",
        "pi0",
        "pi1",
        "are_pl",
        "are_ib",
        "published_are_ib",
        "ratio",
        "converged",
    ])
    .map_err(csv_err)?;
    for c in &report.cells {
        let nums = [c.theta, c.px1, c.sensitivity, c.specificity, c.pi0, c.pi1, c.are_pl, c.are_ib, c.published_are_ib, c.ratio];
        let mut rec: Vec<String> = nums.iter().map(|v| fmt_num(*v)).collect();
        rec.push(c.converged.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}
