//! Batch trial analysis: computes per-trial gaze metrics, attaches the
//! raw performance outcome, and reads/writes the metrics CSV consumed by
//! the comparison pipeline.
//!
//! CSV columns (fixed block first): trial id, task, session, level, the
//! five gaze parameters, invalid ratio, excluded flag; then participant,
//! trial number, seed, user-invalid flag, and the task-specific
//! performance columns.

use crate::error::Error;
use crate::exec;
use crate::mask::FieldBoundary;
use crate::metrics::{
    trial_metrics, DvfParams, ExclusionSummary, SaccadeDetectorParams, TrialAnalysis,
};
use crate::model::{Outcome, TaskKind, TrialRecord};
use crate::Result;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisParams {
    pub detector: SaccadeDetectorParams,
    pub dvf: DvfParams,
}

/// One analyzed trial, one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub trial_id: String,
    pub task: TaskKind,
    pub session: u32,
    pub level: u32,
    pub dvf_percent: Option<f64>,
    pub exploratory_ratio: Option<f64>,
    pub saccade_frequency: Option<f64>,
    pub head_eye_ratio: Option<f64>,
    pub elevation_azimuth_ratio: Option<f64>,
    /// `None` when the trial has no eye-tracking data at all.
    pub invalid_ratio: Option<f64>,
    /// Excluded from gaze analysis (missing data counts as excluded).
    pub excluded: bool,
    pub participant: String,
    pub trial: u32,
    pub seed: u64,
    pub user_invalid: bool,
    pub score: Option<u8>,
    pub targets_found: Option<u32>,
    pub p_adj: Option<f64>,
    pub duration_s: Option<f64>,
    pub collisions: Option<u32>,
    pub timeout: Option<bool>,
    pub area_w: Option<f64>,
    pub area_h: Option<f64>,
}

fn outcome_columns(row: &mut MetricsRow, outcome: &Outcome) {
    match outcome {
        Outcome::Tracking {
            incorrect_selections: _,
            score,
            forced_failure: _,
        } => row.score = Some(*score),
        Outcome::Search {
            targets_found,
            adjusted_score,
            area_w,
            area_h,
        } => {
            row.targets_found = Some(*targets_found);
            row.p_adj = Some(*adjusted_score);
            row.area_w = Some(*area_w);
            row.area_h = Some(*area_h);
        }
        Outcome::Navigation {
            duration,
            collisions,
            timeout,
        } => {
            row.duration_s = Some(*duration);
            row.collisions = Some(*collisions);
            row.timeout = Some(*timeout);
        }
    }
}

/// Analyzes a participant's trials against their measured field.
/// Returns one row per trial plus per-task exclusion bookkeeping.
pub fn analyze_trials(
    records: Vec<TrialRecord>,
    boundary: &FieldBoundary,
    params: &AnalysisParams,
    participant: &str,
) -> (Vec<MetricsRow>, BTreeMap<TaskKind, ExclusionSummary>) {
    let rows = exec::map_ordered(records, |record| {
        let analysis = trial_metrics(&record, boundary, &params.detector, &params.dvf);
        let mut row = MetricsRow {
            trial_id: format!("{}-s{:02}-t{:04}", participant, record.session, record.trial),
            task: record.task,
            session: record.session,
            level: record.level,
            dvf_percent: None,
            exploratory_ratio: None,
            saccade_frequency: None,
            head_eye_ratio: None,
            elevation_azimuth_ratio: None,
            invalid_ratio: None,
            excluded: true,
            participant: participant.to_string(),
            trial: record.trial,
            seed: record.seed,
            user_invalid: record.invalid,
            score: None,
            targets_found: None,
            p_adj: None,
            duration_s: None,
            collisions: None,
            timeout: None,
            area_w: None,
            area_h: None,
        };
        outcome_columns(&mut row, &record.outcome);
        match &analysis {
            TrialAnalysis::Analyzed(m) => {
                row.dvf_percent = Some(m.dvf_percent);
                row.exploratory_ratio = m.exploratory_ratio;
                row.saccade_frequency = Some(m.saccade_frequency);
                row.head_eye_ratio = m.head_eye_ratio;
                row.elevation_azimuth_ratio = m.elevation_azimuth_ratio;
                row.invalid_ratio = Some(m.invalid_frame_ratio);
                row.excluded = false;
            }
            TrialAnalysis::Excluded {
                invalid_frame_ratio,
            } => {
                row.invalid_ratio = Some(*invalid_frame_ratio);
                row.excluded = true;
            }
            TrialAnalysis::Missing => {
                row.invalid_ratio = None;
                row.excluded = true;
            }
            TrialAnalysis::Degenerate { .. } => {
                row.excluded = true;
            }
        }
        (row, record.task, analysis)
    });
    let mut summaries: BTreeMap<TaskKind, ExclusionSummary> = BTreeMap::new();
    let mut out = Vec::with_capacity(rows.len());
    for (row, task, analysis) in rows {
        summaries.entry(task).or_default().add(&analysis);
        out.push(row);
    }
    (out, summaries)
}

const CSV_HEADER: [&str; 23] = [
    "trial_id",
    "task",
    "session",
    "level",
    "dvf_percent",
    "exploratory_ratio",
    "saccade_frequency",
    "head_eye_ratio",
    "elevation_azimuth_ratio",
    "invalid_ratio",
    "excluded",
    "participant",
    "trial",
    "seed",
    "user_invalid",
    "score",
    "targets_found",
    "p_adj",
    "duration_s",
    "collisions",
    "timeout",
    "area_w",
    "area_h",
];

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics_csv<W: Write>(writer: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.trial_id.clone(),
            r.task.name().to_string(),
            r.session.to_string(),
            r.level.to_string(),
            fmt_opt(&r.dvf_percent),
            fmt_opt(&r.exploratory_ratio),
            fmt_opt(&r.saccade_frequency),
            fmt_opt(&r.head_eye_ratio),
            fmt_opt(&r.elevation_azimuth_ratio),
            fmt_opt(&r.invalid_ratio),
            r.excluded.to_string(),
            r.participant.clone(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.user_invalid.to_string(),
            fmt_opt(&r.score),
            fmt_opt(&r.targets_found),
            fmt_opt(&r.p_adj),
            fmt_opt(&r.duration_s),
            fmt_opt(&r.collisions),
            fmt_opt(&r.timeout),
            fmt_opt(&r.area_w),
            fmt_opt(&r.area_h),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_csv_path(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_metrics_csv(std::io::BufWriter::new(file), rows)
}

fn parse_opt<T: std::str::FromStr>(field: &str, line: usize, name: &str) -> Result<Option<T>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse::<T>()
        .map(Some)
        .map_err(|_| Error::parse(line, format!("bad value for {name}: {field:?}")))
}

fn parse_req<T: std::str::FromStr>(field: &str, line: usize, name: &str) -> Result<T> {
    field
        .parse::<T>()
        .map_err(|_| Error::parse(line, format!("bad value for {name}: {field:?}")))
}

pub fn read_metrics_csv<R: std::io::Read>(reader: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(reader);
    {
        let headers = r.headers()?;
        if headers.len() < CSV_HEADER.len() {
            return Err(Error::parse(1, "metrics CSV is missing columns".to_string()));
        }
        for (i, expect) in CSV_HEADER.iter().enumerate() {
            if &headers[i] != *expect {
                return Err(Error::parse(
                    1,
                    format!("column {i} is {:?}, expected {expect:?}", &headers[i]),
                ));
            }
        }
    }
    let mut out = Vec::new();
    for (idx, record) in r.records().enumerate() {
        let line = idx + 2;
        let rec = record?;
        let task = match &rec[1] {
            "tracking" => TaskKind::Tracking,
            "search" => TaskKind::Search,
            "navigation" => TaskKind::Navigation,
            other => return Err(Error::parse(line, format!("unknown task {other:?}"))),
        };
        out.push(MetricsRow {
            trial_id: rec[0].to_string(),
            task,
            session: parse_req(&rec[2], line, "session")?,
            level: parse_req(&rec[3], line, "level")?,
            dvf_percent: parse_opt(&rec[4], line, "dvf_percent")?,
            exploratory_ratio: parse_opt(&rec[5], line, "exploratory_ratio")?,
            saccade_frequency: parse_opt(&rec[6], line, "saccade_frequency")?,
            head_eye_ratio: parse_opt(&rec[7], line, "head_eye_ratio")?,
            elevation_azimuth_ratio: parse_opt(&rec[8], line, "elevation_azimuth_ratio")?,
            invalid_ratio: parse_opt(&rec[9], line, "invalid_ratio")?,
            excluded: parse_req(&rec[10], line, "excluded")?,
            participant: rec[11].to_string(),
            trial: parse_req(&rec[12], line, "trial")?,
            seed: parse_req(&rec[13], line, "seed")?,
            user_invalid: parse_req(&rec[14], line, "user_invalid")?,
            score: parse_opt(&rec[15], line, "score")?,
            targets_found: parse_opt(&rec[16], line, "targets_found")?,
            p_adj: parse_opt(&rec[17], line, "p_adj")?,
            duration_s: parse_opt(&rec[18], line, "duration_s")?,
            collisions: parse_opt(&rec[19], line, "collisions")?,
            timeout: parse_opt(&rec[20], line, "timeout")?,
            area_w: parse_opt(&rec[21], line, "area_w")?,
            area_h: parse_opt(&rec[22], line, "area_h")?,
        });
    }
    Ok(out)
}

pub fn read_metrics_csv_path(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = std::fs::File::open(path)?;
    read_metrics_csv(std::io::BufReader::new(file))
}

/// Renders the per-task exclusion bookkeeping as a small text table.
pub fn render_exclusion_summary(summaries: &BTreeMap<TaskKind, ExclusionSummary>) -> String {
    let mut out = String::from("task        total  missing  excluded  analyzed\n");
    for (task, s) in summaries {
        out.push_str(&format!(
            "{:<11} {:>5} {:>8} {:>9} {:>9}\n",
            task.name(),
            s.total,
            s.missing,
            s.excluded,
            s.analyzed
        ));
    }
    out
}
