use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::spec::ExperimentSpec;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "experiment,label,analytic,empirical,count,gap,tolerance,pass";

/// One grid point: analytic value against its Monte Carlo (or numerical)
/// estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub label: String,
    pub analytic: f64,
    pub empirical: f64,
    pub count: u64,
    pub gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ReportRow {
    pub fn new(
        label: impl Into<String>,
        analytic: f64,
        empirical: f64,
        count: u64,
        tolerance: f64,
    ) -> Self {
        let gap = (analytic - empirical).abs();
        Self {
            label: label.into(),
            analytic,
            empirical,
            count,
            gap,
            tolerance,
            pass: gap <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = "<")]
    Below,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::Below => "<",
        }
    }
}

/// A summary statistic compared against a threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: Relation::AtMost,
            threshold,
            pass: value <= threshold,
        }
    }

    pub fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: Relation::Below,
            threshold,
            pass: value < threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub rows: Vec<ReportRow>,
    pub checks: Vec<Check>,
    /// Informational lines (sensitivity studies, centre-of-bin values).
    pub notes: Vec<String>,
    pub paths_simulated: u64,
    pub truncated: u64,
    pub runtime_secs: f64,
}

impl ExperimentReport {
    pub fn new(spec: &ExperimentSpec) -> Self {
        Self {
            spec: spec.clone(),
            rows: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
            paths_simulated: 0,
            truncated: 0,
            runtime_secs: 0.0,
        }
    }

    pub fn id(&self) -> &str {
        self.spec.id()
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass) && self.checks.iter().all(|c| c.pass)
    }

    pub fn max_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.gap).fold(0.0, f64::max)
    }

    /// Rows whose stored gap differs from `|analytic − empirical|`.
    pub fn inconsistent_rows(&self) -> Vec<&ReportRow> {
        self.rows
            .iter()
            .filter(|r| {
                r.gap != (r.analytic - r.empirical).abs() || r.pass != (r.gap <= r.tolerance)
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                self.id(),
                csv_field(&r.label),
                r.analytic,
                r.empirical,
                r.count,
                r.gap,
                r.tolerance,
                r.pass
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment: {}", self.id());
        let _ = writeln!(s, "kind: {}", self.spec.name.as_str());
        let _ = writeln!(s, "result: {}", if self.passed() { "PASS" } else { "FAIL" });
        let passing = self.rows.iter().filter(|r| r.pass).count();
        let _ = writeln!(s, "rows: {} ({passing} within tolerance)", self.rows.len());
        let _ = writeln!(s, "max_gap: {}", self.max_gap());
        for c in &self.checks {
            let verdict = if c.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(
                s,
                "check {}: {} {} {} {verdict}",
                c.name,
                c.value,
                c.relation.symbol(),
                c.threshold
            );
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        let _ = writeln!(s, "paths_simulated: {}", self.paths_simulated);
        let _ = writeln!(s, "truncated: {}", self.truncated);
        let _ = writeln!(s, "runtime_s: {:.3}", self.runtime_secs);
        let _ = writeln!(s, "spec: {}", self.spec.to_json());
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes `<id>.csv` and `<id>.summary.txt` into directory `dir` (created if
/// missing) and returns both paths.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(format!("{}.csv", report.id()));
    let summary = dir.join(format!("{}.summary.txt", report.id()));
    std::fs::write(&csv, report.to_csv()).map_err(|e| Error::io(&csv, e))?;
    std::fs::write(&summary, report.summary()).map_err(|e| Error::io(&summary, e))?;
    Ok((csv, summary))
}
