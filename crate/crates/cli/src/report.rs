//! Check results, run summaries and CSV emitters.
//!
//! CSV floats use `{:.16e}` (17 significant digits) so that outputs
//! round-trip and identical runs give identical bytes. Runtimes appear only
//! in `summary.json`.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skip => "skip",
        }
    }
}

/// Which side of the threshold passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    /// `value ≤ threshold`.
    Upper,
    /// `value ≥ threshold`.
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    pub value: f64,
    pub threshold: f64,
    pub bound: Bound,
    pub runtime_s: f64,
    pub detail: String,
}

impl CheckResult {
    /// NaN values fail either bound.
    pub fn measured(name: &str, value: f64, threshold: f64, bound: Bound) -> Self {
        let ok = match bound {
            Bound::Upper => value <= threshold,
            Bound::Lower => value >= threshold,
        };
        CheckResult {
            name: name.to_string(),
            status: if ok { Status::Pass } else { Status::Fail },
            value,
            threshold,
            bound,
            runtime_s: 0.0,
            detail: String::new(),
        }
    }

    /// A pipeline error surfaced as a failed check.
    pub fn failed(name: &str, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.to_string(),
            status: Status::Fail,
            value: f64::NAN,
            threshold: f64::NAN,
            bound: Bound::Upper,
            runtime_s: 0.0,
            detail: detail.into(),
        }
    }

    pub fn skipped(name: &str, detail: impl Into<String>) -> Self {
        CheckResult {
            status: Status::Skip,
            ..Self::failed(name, detail)
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl RunSummary {
    pub fn new(command: &str, seed: u64) -> Self {
        RunSummary {
            command: command.to_string(),
            seed,
            checks: Vec::new(),
        }
    }

    /// Runs one stage and records its checks with the stage's wall time split
    /// evenly. An error becomes a single failed check named after the stage.
    pub fn stage<E: std::fmt::Display>(&mut self, name: &str, run: impl FnOnce() -> Result<Vec<CheckResult>, E>) {
        let start = Instant::now();
        let mut checks = match run() {
            Ok(c) => c,
            Err(e) => vec![CheckResult::failed(name, e.to_string())],
        };
        let per = start.elapsed().as_secs_f64() / checks.len().max(1) as f64;
        for c in &mut checks {
            c.runtime_s = per;
        }
        self.checks.extend(checks);
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| c.status == Status::Fail).count()
    }

    pub fn exit_code(&self) -> i32 {
        i32::from(self.failures() > 0)
    }

    /// `summary.csv` (deterministic) and `summary.json` (with runtimes).
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let mut csv = String::from("check,status,value,threshold,bound\n");
        for c in &self.checks {
            let bound = match c.bound {
                Bound::Upper => "upper",
                Bound::Lower => "lower",
            };
            writeln!(csv, "{},{},{},{},{}", c.name, c.status.as_str(), num(c.value), num(c.threshold), bound).unwrap();
        }
        fs::write(dir.join("summary.csv"), csv)?;
        let json = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(dir.join("summary.json"), json + "\n")
    }

    pub fn print(&self) {
        for c in &self.checks {
            let mut line = format!(
                "{:<4} {:<28} value={} threshold={}",
                c.status.as_str(),
                c.name,
                short(c.value),
                short(c.threshold)
            );
            if !c.detail.is_empty() {
                line.push_str("  ");
                line.push_str(&c.detail);
            }
            println!("{line}");
        }
        println!("{} checks, {} failed", self.checks.len(), self.failures());
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn short(v: f64) -> String {
    format!("{v:.4e}")
}

/// Writes a numeric table; every row must match the header width.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        assert_eq!(row.len(), header.len(), "row width must match header");
        let cells: Vec<String> = row.iter().map(|&v| num(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_and_nan() {
        assert_eq!(CheckResult::measured("a", 1.0, 1.0, Bound::Upper).status, Status::Pass);
        assert_eq!(CheckResult::measured("a", 1.1, 1.0, Bound::Upper).status, Status::Fail);
        assert_eq!(CheckResult::measured("a", 0.9, 1.0, Bound::Lower).status, Status::Fail);
        assert_eq!(CheckResult::measured("a", f64::NAN, 1.0, Bound::Lower).status, Status::Fail);
        assert_eq!(CheckResult::measured("a", f64::NAN, 1.0, Bound::Upper).status, Status::Fail);
    }

    #[test]
    fn exit_code_ignores_skips() {
        let mut s = RunSummary::new("t", 0);
        s.checks.push(CheckResult::skipped("x", "n/a"));
        assert_eq!(s.exit_code(), 0);
        s.stage("boom", || Err::<Vec<CheckResult>, _>("bad input"));
        assert_eq!(s.exit_code(), 1);
        assert_eq!(s.checks[1].name, "boom");
        assert_eq!(s.checks[1].detail, "bad input");
    }

    #[test]
    fn csv_round_trips_floats() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let v = 0.1 + 0.2;
        write_csv(&p, &["a", "b"], &[vec![v, -1e-300]]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let row = text.lines().nth(1).unwrap();
        let parsed: Vec<f64> = row.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(parsed, vec![v, -1e-300]);
    }
}
