use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckVerdict {
    Pass,
    Fail,
    Indeterminate,
    Skipped,
    Error,
}

impl CheckVerdict {
    pub fn label(self) -> &'static str {
        match self {
            CheckVerdict::Pass => "PASS",
            CheckVerdict::Fail => "FAIL",
            CheckVerdict::Indeterminate => "INDETERMINATE",
            CheckVerdict::Skipped => "SKIPPED",
            CheckVerdict::Error => "ERROR",
        }
    }
}

/// One check over all sample points. `point` and `values` describe the point
/// with the largest residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub anchor: String,
    pub point: Option<Vec<f64>>,
    pub values: BTreeMap<String, f64>,
    pub residual: Option<f64>,
    pub tolerance: f64,
    pub verdict: CheckVerdict,
    pub message: Option<String>,
}

impl CheckRecord {
    /// Pass iff `residual ≤ tolerance`; other residuals give the stored
    /// verdict only when it is fail or indeterminate.
    pub fn verdict_consistent(&self) -> bool {
        match (self.verdict, self.residual) {
            (CheckVerdict::Pass, Some(r)) => r <= self.tolerance,
            (CheckVerdict::Fail, Some(r)) => r > self.tolerance,
            (CheckVerdict::Indeterminate, Some(_)) => true,
            (CheckVerdict::Pass, None) => false,
            (CheckVerdict::Fail | CheckVerdict::Skipped | CheckVerdict::Error | CheckVerdict::Indeterminate, None) => true,
            (CheckVerdict::Skipped | CheckVerdict::Error, Some(_)) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub pass: usize,
    pub fail: usize,
    pub indeterminate: usize,
    pub skipped: usize,
    pub error: usize,
}

impl Summary {
    pub fn of(records: &[CheckRecord]) -> Summary {
        let mut s = Summary::default();
        for r in records {
            match r.verdict {
                CheckVerdict::Pass => s.pass += 1,
                CheckVerdict::Fail => s.fail += 1,
                CheckVerdict::Indeterminate => s.indeterminate += 1,
                CheckVerdict::Skipped => s.skipped += 1,
                CheckVerdict::Error => s.error += 1,
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub scenario: String,
    pub engine_version: String,
    pub seed: u64,
    pub points: usize,
    pub budget: usize,
    pub records: Vec<CheckRecord>,
    pub summary: Summary,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.summary.fail == 0 && self.summary.error == 0
    }

    pub fn record(&self, name: &str) -> Option<&CheckRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report values are finite")
    }

    pub fn from_json(s: &str) -> serde_json::Result<CheckReport> {
        serde_json::from_str(s)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario {}  (dwarp {}, seed {}, {} points, budget {})",
            self.scenario, self.engine_version, self.seed, self.points, self.budget
        );
        for r in &self.records {
            let residual = r.residual.map_or("-".to_string(), |v| format!("{v:.3e}"));
            let _ = write!(out, "{:<13} {:<26} residual {:>10}  tol {:.1e}", r.verdict.label(), r.name, residual, r.tolerance);
            if let Some(m) = &r.message {
                let _ = write!(out, "  ({m})");
            }
            out.push('\n');
        }
        let s = &self.summary;
        let _ = writeln!(
            out,
            "{} passed, {} failed, {} indeterminate, {} skipped, {} errors",
            s.pass, s.fail, s.indeterminate, s.skipped, s.error
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(verdict: CheckVerdict, residual: Option<f64>) -> CheckRecord {
        CheckRecord {
            name: "x".into(),
            anchor: String::new(),
            point: None,
            values: BTreeMap::new(),
            residual,
            tolerance: 1e-6,
            verdict,
            message: None,
        }
    }

    #[test]
    fn verdict_consistency() {
        assert!(rec(CheckVerdict::Pass, Some(1e-7)).verdict_consistent());
        assert!(!rec(CheckVerdict::Pass, Some(1e-5)).verdict_consistent());
        assert!(rec(CheckVerdict::Fail, Some(1e-5)).verdict_consistent());
        assert!(!rec(CheckVerdict::Fail, Some(1e-7)).verdict_consistent());
        assert!(!rec(CheckVerdict::Pass, None).verdict_consistent());
        assert!(rec(CheckVerdict::Skipped, None).verdict_consistent());
        assert!(!rec(CheckVerdict::Error, Some(0.0)).verdict_consistent());
    }

    #[test]
    fn summary_and_text() {
        let records = vec![rec(CheckVerdict::Pass, Some(0.0)), rec(CheckVerdict::Skipped, None), rec(CheckVerdict::Error, None)];
        let summary = Summary::of(&records);
        assert_eq!((summary.pass, summary.skipped, summary.error), (1, 1, 1));
        let r = CheckReport { scenario: "s".into(), engine_version: "0".into(), seed: 1, points: 2, budget: 64, records, summary };
        assert!(!r.all_passed());
        let text = r.to_text();
        assert_eq!(text.lines().count(), 5);
        assert!(text.contains("1 passed, 0 failed, 0 indeterminate, 1 skipped, 1 errors"));
        assert!(r.to_json().contains("\"verdict\": \"skipped\""));
    }
}
