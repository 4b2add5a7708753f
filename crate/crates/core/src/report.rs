//! Versioned equivalence-report schema and its human-readable rendering:
//! per parameter and task, the TOST equivalence p-value (Eq), the group
//! difference p-value (Dif) and the learning-rate interaction p-value
//! (LR), with two-stage per-participant results alongside.

use crate::error::Error;
use crate::model::TaskKind;
use crate::stats::TostMode;
use crate::Result;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterComparison {
    pub task: TaskKind,
    pub parameter: String,
    pub n_a: usize,
    pub n_b: usize,
    /// Equivalence margin actually used (delta_factor x pooled sd of the
    /// detrended residuals).
    pub delta: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub slope_a: f64,
    pub slope_b: f64,
    pub p_equivalence: f64,
    pub equivalent: bool,
    pub p_difference: f64,
    pub p_learning_rate: f64,
    pub p_difference_two_stage: Option<f64>,
    pub p_learning_rate_two_stage: Option<f64>,
    /// Numeric normality report of the analyzed values.
    pub skewness: f64,
    pub kurtosis: f64,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// A parameter/task combination that could not be tested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedComparison {
    pub task: TaskKind,
    pub parameter: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub version: u32,
    pub group_a: String,
    pub group_b: String,
    pub alpha: f64,
    pub delta_factor: f64,
    pub tost_mode: TostMode,
    pub parameters: Vec<ParameterComparison>,
    #[serde(default)]
    pub skipped: Vec<SkippedComparison>,
}

impl EquivalenceReport {
    pub fn validate(&self) -> Result<()> {
        if self.version != REPORT_VERSION {
            return Err(Error::parse(
                0,
                format!(
                    "unsupported report version {} (expected {REPORT_VERSION})",
                    self.version
                ),
            ));
        }
        if self.group_a.is_empty() || self.group_b.is_empty() {
            return Err(Error::parse(0, "report is missing a group label".to_string()));
        }
        for p in &self.parameters {
            for v in [p.p_equivalence, p.p_difference, p.p_learning_rate] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::parse(
                        0,
                        format!("p-value {v} out of [0,1] for {}/{}", p.task, p.parameter),
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn write_report(path: &Path, report: &EquivalenceReport) -> Result<()> {
    report.validate()?;
    std::fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<EquivalenceReport> {
    let text = std::fs::read_to_string(path)?;
    let report: EquivalenceReport =
        serde_json::from_str(&text).map_err(|e| Error::parse(0, format!("{e}")))?;
    report.validate()?;
    Ok(report)
}

fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        format!("{p:.1e}")
    } else {
        format!("{p:.3}")
    }
}

/// Renders the three-finding table (Eq / Dif / LR per condition).
pub fn render_report(report: &EquivalenceReport) -> Result<String> {
    report.validate()?;
    let mut out = String::new();
    out.push_str(&format!(
        "Group equivalence report: {} vs {} (alpha {}, delta = {} x sd, TOST on {})\n\n",
        report.group_a,
        report.group_b,
        report.alpha,
        report.delta_factor,
        match report.tost_mode {
            TostMode::TrialResiduals => "trial residuals",
            TostMode::ParticipantMeans => "participant means",
        }
    ));
    out.push_str(&format!(
        "{:<11} {:<16} {:>7} {:>7} {:>9} {:>9} {:>9}  {}\n",
        "task", "parameter", "n(A)", "n(B)", "Eq", "Dif", "LR", "verdict"
    ));
    for p in &report.parameters {
        let verdict = if p.equivalent {
            "equivalent"
        } else if p.p_difference < report.alpha {
            "different"
        } else {
            "inconclusive"
        };
        out.push_str(&format!(
            "{:<11} {:<16} {:>7} {:>7} {:>9} {:>9} {:>9}  {}\n",
            p.task.name(),
            p.parameter,
            p.n_a,
            p.n_b,
            fmt_p(p.p_equivalence),
            fmt_p(p.p_difference),
            fmt_p(p.p_learning_rate),
            verdict
        ));
        for note in &p.notes {
            out.push_str(&format!("{:<11} {:<16} note: {note}\n", "", ""));
        }
    }
    for s in &report.skipped {
        out.push_str(&format!(
            "{:<11} {:<16} skipped: {}\n",
            s.task.name(),
            s.parameter,
            s.reason
        ));
    }
    if report.parameters.is_empty() && report.skipped.is_empty() {
        out.push_str("(no parameters)\n");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> EquivalenceReport {
        EquivalenceReport {
            version: REPORT_VERSION,
            group_a: "A".into(),
            group_b: "B".into(),
            alpha: 0.05,
            delta_factor: 0.2,
            tost_mode: TostMode::TrialResiduals,
            parameters: vec![ParameterComparison {
                task: TaskKind::Search,
                parameter: "p_adj".into(),
                n_a: 100,
                n_b: 110,
                delta: 12.5,
                mean_a: 1000.0,
                mean_b: 1010.0,
                slope_a: 5.0,
                slope_b: 5.5,
                p_equivalence: 0.002,
                equivalent: true,
                p_difference: 0.4,
                p_learning_rate: 0.6,
                p_difference_two_stage: Some(0.5),
                p_learning_rate_two_stage: Some(0.7),
                skewness: 0.1,
                kurtosis: -0.2,
                notes: vec![],
            }],
            skipped: vec![],
        }
    }

    #[test]
    fn report_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let report = sample_report();
        write_report(&path, &report).unwrap();
        assert_eq!(read_report(&path).unwrap(), report);
    }

    #[test]
    fn empty_parameter_list_renders() {
        let mut r = sample_report();
        r.parameters.clear();
        let text = render_report(&r).unwrap();
        assert!(text.contains("(no parameters)"));
    }

    #[test]
    fn missing_group_is_an_error() {
        let mut r = sample_report();
        r.group_b = String::new();
        assert!(render_report(&r).is_err());
    }

    #[test]
    fn version_mismatch_is_an_error() {
        let mut r = sample_report();
        r.version = 99;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        std::fs::write(&path, serde_json::to_string(&r).unwrap()).unwrap();
        match read_report(&path) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("version")),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn render_marks_equivalence() {
        let text = render_report(&sample_report()).unwrap();
        assert!(text.contains("equivalent"));
        assert!(text.contains("p_adj"));
    }
}
