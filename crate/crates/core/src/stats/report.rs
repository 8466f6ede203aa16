//! Report rows and verdict summaries shared by every statistical check.

use serde::Serialize;

use crate::error::Result;
use crate::persist::{fmt_f64, to_sorted_json};

pub const REPORT_HEADER: &str = "x,estimate,stderr,ci_lo,ci_hi";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReportRow {
    pub x: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl ReportRow {
    pub fn new(x: f64, iv: super::Interval) -> Self {
        ReportRow { x, estimate: iv.estimate, stderr: iv.stderr, ci_lo: iv.lo, ci_hi: iv.hi }
    }
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        let cols = [r.x, r.estimate, r.stderr, r.ci_lo, r.ci_hi].map(fmt_f64);
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

/// `{test_name, pass, details}` summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestVerdict {
    pub test_name: String,
    pub pass: bool,
    pub details: serde_json::Value,
}

impl TestVerdict {
    pub fn to_json(&self) -> Result<String> {
        to_sorted_json(self)
    }
}

pub trait Report: Serialize {
    fn test_name(&self) -> &'static str;
    fn rows(&self) -> Vec<ReportRow>;
    fn passed(&self) -> bool;

    fn verdict(&self) -> TestVerdict {
        TestVerdict {
            test_name: self.test_name().to_string(),
            pass: self.passed(),
            details: serde_json::to_value(self).unwrap_or(serde_json::Value::Null),
        }
    }

    fn csv(&self) -> String {
        report_csv(&self.rows())
    }
}
