//! CSV rows with a frozen column order.

use std::cmp::Ordering;

pub const HEADER: [&str; 11] = [
    "scenario",
    "epsilon",
    "terminal_error",
    "projection_residual",
    "predicted_error",
    "control_energy",
    "delta",
    "gamma_hat",
    "iterations",
    "converged",
    "wall_time_ms",
];

pub const VERIFY_HEADER: [&str; 5] = ["check", "epsilon", "value", "bound", "status"];

/// Seventeen significant digits; reparses to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub scenario: String,
    pub eps: f64,
    pub terminal_error: f64,
    pub projection_residual: f64,
    pub predicted_error: f64,
    pub control_energy: f64,
    /// Empty when the subspace is trivial.
    pub delta: Option<f64>,
    pub gamma_hat: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_ms: f64,
}

impl ReportRow {
    pub fn fields(&self) -> [String; 11] {
        [
            self.scenario.clone(),
            fmt_f64(self.eps),
            fmt_f64(self.terminal_error),
            fmt_f64(self.projection_residual),
            fmt_f64(self.predicted_error),
            fmt_f64(self.control_energy),
            fmt_opt(self.delta),
            fmt_f64(self.gamma_hat),
            self.iterations.to_string(),
            self.converged.to_string(),
            fmt_f64(self.wall_time_ms),
        ]
    }
}

/// Sorts by scenario, then ε ascending.
pub fn sort_rows(rows: &mut [ReportRow]) {
    rows.sort_by(|a, b| {
        a.scenario
            .cmp(&b.scenario)
            .then(a.eps.partial_cmp(&b.eps).unwrap_or(Ordering::Equal))
    });
}

pub fn rows_to_csv(rows: &[ReportRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8 csv"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Vacuous,
}

impl CheckStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Vacuous => "vacuous",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub check: &'static str,
    pub eps: Option<f64>,
    pub value: Option<f64>,
    pub bound: Option<f64>,
    pub status: CheckStatus,
}

pub fn checks_to_csv(rows: &[CheckRow]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(VERIFY_HEADER)?;
    for r in rows {
        w.write_record([
            r.check.to_string(),
            fmt_opt(r.eps),
            fmt_opt(r.value),
            fmt_opt(r.bound),
            r.status.as_str().to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8 csv"))
}
