//! Report documents: JSON for machines, text rendered from the same data.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::verify::{CheckResult, SamplingConfig, Status};

/// Outcome of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub name: String,
    pub status: Status,
    pub max_residual: f64,
    pub worst_point: Vec<f64>,
    pub points_used: usize,
    pub checks: Vec<CheckResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TaskReport {
    /// Summarise a list of checks; an error forces FAIL.
    pub fn new(name: impl Into<String>, checks: Vec<CheckResult>, error: Option<String>) -> Self {
        let merged = CheckResult::merge("", &checks);
        let status = if error.is_some() || checks.is_empty() {
            Status::Fail
        } else {
            merged.status
        };
        Self {
            name: name.into(),
            status,
            max_residual: merged.max_abs_residual,
            worst_point: merged.worst_point,
            points_used: merged.points_used,
            checks,
            error,
        }
    }
}

/// Whole-run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub overall: Status,
    pub manifest_sha256: String,
    pub sampling: SamplingConfig,
    pub tasks: Vec<TaskReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<u64>,
}

impl ReportDocument {
    pub fn new(manifest_sha256: String, sampling: SamplingConfig, tasks: Vec<TaskReport>) -> Self {
        Self {
            overall: Status::combine(tasks.iter().map(|t| t.status)),
            manifest_sha256,
            sampling,
            tasks,
            elapsed_ms: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Process exit code: 0 PASS, 2 FAIL, 3 INCONCLUSIVE.
    pub fn exit_code(&self) -> i32 {
        match self.overall {
            Status::Pass => 0,
            Status::Fail => 2,
            Status::Inconclusive => 3,
        }
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let s = &self.sampling;
        let _ = writeln!(out, "manifest sha256: {}", self.manifest_sha256);
        let _ = writeln!(
            out,
            "sampling: points={} seed={} tol_abs={:e} tol_rel={:e}",
            s.points, s.seed, s.tol_abs, s.tol_rel
        );
        for t in &self.tasks {
            let _ = writeln!(
                out,
                "\n[{}] {}  max residual {:.3e}  points {}",
                t.status, t.name, t.max_residual, t.points_used
            );
            if let Some(e) = &t.error {
                let _ = writeln!(out, "    error: {e}");
            }
            for c in &t.checks {
                let _ = writeln!(
                    out,
                    "    {:<12} {}  residual {:.3e}  scale {:.3e}  points {}/{} rejected",
                    c.status.as_str(),
                    c.name,
                    c.max_abs_residual,
                    c.magnitude_scale,
                    c.points_used,
                    c.points_rejected
                );
                if c.status != Status::Pass && !c.worst_point.is_empty() {
                    let pt: Vec<String> = c.worst_point.iter().map(|v| format!("{v:.6}")).collect();
                    let _ = writeln!(out, "                 worst point ({})", pt.join(", "));
                }
                if let Some(n) = &c.note {
                    let _ = writeln!(out, "                 {n}");
                }
            }
        }
        let _ = writeln!(out, "\noverall: {}", self.overall);
        if let Some(ms) = self.elapsed_ms {
            let _ = writeln!(out, "elapsed: {ms} ms");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(name: &str, status: Status, r: f64) -> CheckResult {
        CheckResult {
            name: name.into(),
            status,
            max_abs_residual: r,
            magnitude_scale: 1.0,
            worst_point: vec![0.25, -0.5],
            points_used: 64,
            points_rejected: 0,
            note: Some("note".into()),
        }
    }

    #[test]
    fn overall_and_exit_codes() {
        let pass = TaskReport::new("a", vec![check("x", Status::Pass, 0.0)], None);
        let inc = TaskReport::new("b", vec![check("y", Status::Inconclusive, 0.0)], None);
        let fail = TaskReport::new("c", vec![], Some("boom".into()));
        let cfg = SamplingConfig::default();
        assert_eq!(ReportDocument::new("h".into(), cfg, vec![pass.clone()]).exit_code(), 0);
        assert_eq!(
            ReportDocument::new("h".into(), cfg, vec![pass.clone(), inc.clone()]).exit_code(),
            3
        );
        assert_eq!(
            ReportDocument::new("h".into(), cfg, vec![pass, inc, fail]).exit_code(),
            2
        );
    }

    #[test]
    fn json_round_trip_preserves_text() {
        let t = TaskReport::new("a", vec![check("x", Status::Fail, 1.0 / 3.0)], None);
        let doc = ReportDocument::new("abc".into(), SamplingConfig::default(), vec![t]);
        let back = ReportDocument::from_json(&doc.to_json()).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.render_text(), doc.render_text());
    }
}
