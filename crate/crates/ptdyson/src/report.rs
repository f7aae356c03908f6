//! Pass/fail checks, the text report and CSV tables.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// value ≤ threshold
    AtMost,
    /// value > threshold
    Above,
    /// |value − 4| ≤ threshold·4, for convergence ratios
    RatioNear(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub bound: Bound,
    /// Module error or other explanation, if any.
    pub detail: Option<String>,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check::new(name, value, threshold, Bound::AtMost)
    }

    pub fn above(name: &str, value: f64, threshold: f64) -> Self {
        Check::new(name, value, threshold, Bound::Above)
    }

    /// value within a relative `slack` of `target`.
    pub fn ratio(name: &str, value: f64, target: u32, slack: f64) -> Self {
        Check::new(name, value, slack, Bound::RatioNear(target))
    }

    pub fn new(name: &str, value: f64, threshold: f64, bound: Bound) -> Self {
        let passed = match bound {
            Bound::AtMost => value <= threshold,
            Bound::Above => value > threshold,
            Bound::RatioNear(t) => (value - t as f64).abs() <= threshold * t as f64,
        };
        Check { name: name.to_string(), passed, value, threshold, bound, detail: None }
    }

    pub fn failed(name: &str, threshold: f64, bound: Bound, detail: impl ToString) -> Self {
        Check {
            name: name.to_string(),
            passed: false,
            value: f64::NAN,
            threshold,
            bound,
            detail: Some(detail.to_string()),
        }
    }

    pub fn with_detail(mut self, detail: impl ToString) -> Self {
        self.detail = Some(detail.to_string());
        self
    }

    fn relation(&self) -> String {
        match self.bound {
            Bound::AtMost => format!("<= {:e}", self.threshold),
            Bound::Above => format!("> {:e}", self.threshold),
            Bound::RatioNear(t) => format!("= {t} +/- {}%", self.threshold * 100.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub command: String,
    pub checks: Vec<Check>,
    pub info: Vec<String>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        RunReport { command: command.to_string(), ..Default::default() }
    }

    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn info(&mut self, line: impl Into<String>) {
        self.info.push(line.into());
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "command: {}", self.command).unwrap();
        for line in &self.info {
            writeln!(s, "{line}").unwrap();
        }
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            write!(s, "[{status}] {} value={:e} ({})", c.name, c.value, c.relation()).unwrap();
            if let Some(d) = &c.detail {
                write!(s, " -- {d}").unwrap();
            }
            s.push('\n');
        }
        let n_pass = self.checks.iter().filter(|c| c.passed).count();
        writeln!(s, "overall: {} ({n_pass}/{} checks passed)", if self.passed() { "PASS" } else { "FAIL" }, self.checks.len())
            .unwrap();
        s
    }
}

/// A CSV table held in memory; cells are preformatted strings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k].as_str()).collect())
    }
}

/// Shortest representation that parses back to the same f64.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overall_status() {
        let mut r = RunReport::new("x");
        r.push(Check::at_most("a", 1e-9, 1e-8));
        r.push(Check::above("b", 0.2, 0.1));
        r.push(Check::ratio("c", 3.9, 4, 0.2));
        assert!(r.passed());
        r.push(Check::failed("d", 0.0, Bound::AtMost, "boom"));
        assert_eq!(r.exit_code(), 1);
        let text = r.render();
        assert!(text.contains("[FAIL] d value=NaN"));
        assert!(text.contains("boom"));
        assert!(text.ends_with("overall: FAIL (3/4 checks passed)\n"));
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -1.0, 1e-300, 2.0f64.sqrt(), f64::NAN] {
            let s = num(v);
            let back: f64 = s.parse().unwrap();
            assert!(back == v || v.is_nan());
        }
        assert_eq!(num(-1.0), "-1.0");
    }
}
