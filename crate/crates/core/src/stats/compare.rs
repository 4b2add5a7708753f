//! The group-comparison pipeline over metrics tables: per parameter and
//! task, transform, clamp outliers, detrend (session + trial), TOST the
//! residuals, and run the group-difference / learning-rate tests.

use crate::analysis::MetricsRow;
use crate::error::Error;
use crate::exec;
use crate::model::TaskKind;
use crate::report::{EquivalenceReport, ParameterComparison, SkippedComparison, REPORT_VERSION};
use crate::stats::{
    clamp_outliers, fit_linear, group_difference, skewness_kurtosis, tost, Design, Group,
    Observation, ObservationTable, TostConfig, TostMode,
};
use crate::Result;
use std::collections::BTreeMap;

/// How a parameter's raw values are transformed before analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Transform {
    Identity,
    /// Natural log, for the right-skewed navigation duration.
    Log,
}

struct ParameterSpec {
    name: &'static str,
    tasks: &'static [TaskKind],
    transform: Transform,
    gaze: bool,
    extract: fn(&MetricsRow) -> Option<f64>,
    /// Extra note attached to every comparison of this parameter.
    note: Option<&'static str>,
}

const ALL_TASKS: &[TaskKind] = &TaskKind::ALL;

fn registry() -> Vec<ParameterSpec> {
    vec![
        ParameterSpec {
            name: "dvf",
            tasks: ALL_TASKS,
            transform: Transform::Identity,
            gaze: true,
            extract: |r| r.dvf_percent,
            note: None,
        },
        ParameterSpec {
            name: "expl_ratio",
            tasks: ALL_TASKS,
            transform: Transform::Identity,
            gaze: true,
            extract: |r| r.exploratory_ratio,
            note: None,
        },
        ParameterSpec {
            name: "saccade_freq",
            tasks: ALL_TASKS,
            transform: Transform::Identity,
            gaze: true,
            extract: |r| r.saccade_frequency,
            note: None,
        },
        ParameterSpec {
            name: "head_eye_ratio",
            tasks: ALL_TASKS,
            transform: Transform::Identity,
            gaze: true,
            extract: |r| r.head_eye_ratio,
            note: None,
        },
        ParameterSpec {
            name: "elev_azim_ratio",
            tasks: ALL_TASKS,
            transform: Transform::Identity,
            gaze: true,
            extract: |r| r.elevation_azimuth_ratio,
            note: None,
        },
        ParameterSpec {
            name: "score",
            tasks: &[TaskKind::Tracking],
            transform: Transform::Identity,
            gaze: false,
            extract: |r| r.score.map(|s| s as f64),
            note: None,
        },
        ParameterSpec {
            name: "p_adj",
            tasks: &[TaskKind::Search],
            transform: Transform::Identity,
            gaze: false,
            extract: |r| r.p_adj,
            note: None,
        },
        ParameterSpec {
            name: "duration",
            tasks: &[TaskKind::Navigation],
            transform: Transform::Log,
            gaze: false,
            extract: |r| r.duration_s,
            note: Some("log-transformed (base e) before analysis"),
        },
        ParameterSpec {
            name: "collisions",
            tasks: &[TaskKind::Navigation],
            transform: Transform::Identity,
            gaze: false,
            extract: |r| r.collisions.map(|c| c as f64),
            note: Some("count data; two-stage per-participant comparison is primary"),
        },
    ]
}

/// Parameter names accepted by `--params`.
pub fn parameter_names() -> Vec<&'static str> {
    registry().iter().map(|s| s.name).collect()
}

fn collect_observations(
    rows: &[MetricsRow],
    group: Group,
    task: TaskKind,
    spec: &ParameterSpec,
) -> Vec<Observation> {
    rows.iter()
        .filter(|r| r.task == task && !r.user_invalid)
        .filter(|r| !spec.gaze || !r.excluded)
        .filter_map(|r| {
            (spec.extract)(r).map(|value| Observation {
                group,
                participant: r.participant.clone(),
                session: r.session,
                trial: r.trial,
                value,
            })
        })
        .collect()
}

enum ComparisonOutcome {
    Done(Box<ParameterComparison>),
    Skipped(SkippedComparison),
}

fn compare_one(
    rows_a: &[MetricsRow],
    rows_b: &[MetricsRow],
    task: TaskKind,
    spec: &ParameterSpec,
    cfg: &TostConfig,
) -> ComparisonOutcome {
    let skip = |reason: String| {
        ComparisonOutcome::Skipped(SkippedComparison {
            task,
            parameter: spec.name.to_string(),
            reason,
        })
    };
    let mut obs = collect_observations(rows_a, Group::A, task, spec);
    obs.extend(collect_observations(rows_b, Group::B, task, spec));
    let n_a = obs.iter().filter(|o| o.group == Group::A).count();
    let n_b = obs.len() - n_a;
    if n_a < 3 || n_b < 3 {
        return skip(format!("not enough observations (A: {n_a}, B: {n_b})"));
    }
    // transform
    if spec.transform == Transform::Log {
        for o in &mut obs {
            if o.value <= 0.0 {
                return skip(format!("non-positive value {} under log transform", o.value));
            }
            o.value = o.value.ln();
        }
    }
    // clamp outliers over the pooled dataset
    let values: Vec<f64> = obs.iter().map(|o| o.value).collect();
    let clamped = clamp_outliers(&values);
    for (o, v) in obs.iter_mut().zip(&clamped) {
        o.value = *v;
    }
    let zero_fraction =
        obs.iter().filter(|o| o.value == 0.0).count() as f64 / obs.len() as f64;

    // detrend: one pooled fit with session and trial as fixed effects
    let session: Vec<f64> = obs.iter().map(|o| o.session as f64).collect();
    let trial: Vec<f64> = obs.iter().map(|o| o.trial as f64).collect();
    let y: Vec<f64> = obs.iter().map(|o| o.value).collect();
    let fit = match fit_linear(&y, &Design::detrend(&session, &trial)) {
        Ok(f) => f,
        Err(e) => return skip(format!("detrend failed: {e}")),
    };

    // TOST on the residuals, split by group
    let (mut res_a, mut res_b) = (Vec::new(), Vec::new());
    for (o, &r) in obs.iter().zip(&fit.residuals) {
        match o.group {
            Group::A => res_a.push((o.participant.clone(), r)),
            Group::B => res_b.push((o.participant.clone(), r)),
        }
    }
    let tost_input = |side: &[(String, f64)]| -> Vec<f64> {
        match cfg.mode {
            TostMode::TrialResiduals => side.iter().map(|(_, r)| *r).collect(),
            TostMode::ParticipantMeans => {
                let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
                for (p, r) in side {
                    let e = acc.entry(p.as_str()).or_default();
                    e.0 += r;
                    e.1 += 1;
                }
                acc.values().map(|(s, n)| s / *n as f64).collect()
            }
        }
    };
    let tost_result = match tost(&tost_input(&res_a), &tost_input(&res_b), cfg) {
        Ok(r) => r,
        Err(e) => return skip(format!("TOST failed: {e}")),
    };

    // difference and learning-rate tests on the (transformed, clamped)
    // values
    let table = ObservationTable { rows: obs };
    let tests = match group_difference(&table) {
        Ok(t) => t,
        Err(e) => return skip(format!("group tests failed: {e}")),
    };

    let (skewness, kurtosis) = skewness_kurtosis(&y);
    let mut notes: Vec<String> = spec.note.iter().map(|s| s.to_string()).collect();
    if spec.name == "collisions" && zero_fraction > 0.5 {
        notes.push(format!(
            "zero-inflated: {:.0}% of trials had no collisions",
            zero_fraction * 100.0
        ));
    }
    if tests.dropped_participants > 0 {
        notes.push(format!(
            "{} participant(s) dropped from the two-stage path (<3 observations)",
            tests.dropped_participants
        ));
    }
    ComparisonOutcome::Done(Box::new(ParameterComparison {
        task,
        parameter: spec.name.to_string(),
        n_a,
        n_b,
        delta: tost_result.delta,
        mean_a: tests.mean_a,
        mean_b: tests.mean_b,
        slope_a: tests.slope_a,
        slope_b: tests.slope_b,
        p_equivalence: tost_result.p_equivalence,
        equivalent: tost_result.equivalent,
        p_difference: tests.p_difference,
        p_learning_rate: tests.p_learning_rate,
        p_difference_two_stage: tests.p_difference_two_stage,
        p_learning_rate_two_stage: tests.p_learning_rate_two_stage,
        skewness,
        kurtosis,
        notes,
    }))
}

/// Runs the comparison pipeline for the selected parameters (all when
/// `params` is empty). Parameters fan out through the batch executor;
/// output order is fixed by the registry.
pub fn compare_tables(
    rows_a: &[MetricsRow],
    rows_b: &[MetricsRow],
    group_a: &str,
    group_b: &str,
    params: &[String],
    cfg: &TostConfig,
) -> Result<EquivalenceReport> {
    let specs = registry();
    for p in params {
        if !specs.iter().any(|s| s.name == p) {
            return Err(Error::config(format!(
                "unknown parameter {p:?}; known: {}",
                parameter_names().join(", ")
            )));
        }
    }
    let selected: Vec<ParameterSpec> = specs
        .into_iter()
        .filter(|s| params.is_empty() || params.iter().any(|p| p == s.name))
        .collect();
    let jobs: Vec<(usize, TaskKind)> = selected
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.tasks.iter().map(move |&t| (i, t)))
        .collect();
    let outcomes = exec::map_ordered(jobs, |(i, task)| {
        compare_one(rows_a, rows_b, task, &selected[i], cfg)
    });
    let mut report = EquivalenceReport {
        version: REPORT_VERSION,
        group_a: group_a.to_string(),
        group_b: group_b.to_string(),
        alpha: cfg.alpha,
        delta_factor: cfg.delta_factor,
        tost_mode: cfg.mode,
        parameters: Vec::new(),
        skipped: Vec::new(),
    };
    for outcome in outcomes {
        match outcome {
            ComparisonOutcome::Done(c) => report.parameters.push(*c),
            ComparisonOutcome::Skipped(s) => report.skipped.push(s),
        }
    }
    Ok(report)
}
