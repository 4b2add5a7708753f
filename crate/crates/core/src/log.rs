//! Line-delimited trial-log serialization: one JSON trial per line, with
//! an explicit schema-version field. Chosen for streamability over
//! multi-thousand-trial studies.

use crate::error::Error;
use crate::model::{TrialRecord, SCHEMA_VERSION};
use crate::Result;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

/// Serializes one trial to its log line (no trailing newline).
pub fn serialize_trial(record: &TrialRecord) -> Result<String> {
    Ok(serde_json::to_string(record)?)
}

/// Parses one log line. `line_no` is 1-based and used for error reporting.
pub fn parse_trial(line: &str, line_no: usize) -> Result<TrialRecord> {
    let record: TrialRecord = serde_json::from_str(line)
        .map_err(|e| Error::parse(line_no, format!("{e}")))?;
    if record.version != SCHEMA_VERSION {
        return Err(Error::parse(
            line_no,
            format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                record.version
            ),
        ));
    }
    record
        .validate()
        .map_err(|e| Error::parse(line_no, format!("{e}")))?;
    Ok(record)
}

/// Streaming writer for trial logs.
pub struct TrialLogWriter<W: Write> {
    inner: W,
}

impl<W: Write> TrialLogWriter<W> {
    pub fn new(inner: W) -> Self {
        TrialLogWriter { inner }
    }

    pub fn write(&mut self, record: &TrialRecord) -> Result<()> {
        let line = serialize_trial(record)?;
        self.inner.write_all(line.as_bytes())?;
        self.inner.write_all(b"\n")?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

/// Reads every trial from a JSONL stream.
pub fn read_trials<R: Read>(reader: R) -> Result<Vec<TrialRecord>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_trial(&line, idx + 1)?);
    }
    Ok(out)
}

pub fn read_trials_path(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = std::fs::File::open(path)?;
    read_trials(file)
}

pub fn write_trials_path(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = TrialLogWriter::new(std::io::BufWriter::new(file));
    for r in records {
        w.write(r)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;
    use proptest::prelude::*;

    fn empty_record() -> TrialRecord {
        TrialRecord {
            version: SCHEMA_VERSION,
            task: TaskKind::Search,
            session: 3,
            trial: 17,
            level: 42,
            seed: 12345,
            invalid: false,
            events: vec![],
            samples: vec![],
            outcome: Outcome::Search {
                targets_found: 4,
                adjusted_score: 8112.0,
                area_w: 52.0,
                area_h: 39.0,
            },
        }
    }

    #[test]
    fn empty_record_round_trips() {
        let r = empty_record();
        let line = serialize_trial(&r).unwrap();
        assert_eq!(parse_trial(&line, 1).unwrap(), r);
    }

    #[test]
    fn record_with_samples_round_trips() {
        let mut r = empty_record();
        r.task = TaskKind::Tracking;
        r.outcome = Outcome::Tracking {
            incorrect_selections: 1,
            score: 1,
            forced_failure: false,
        };
        for k in 0..8 {
            r.samples.push(GazeSample {
                t: k as f64 / SAMPLE_RATE_HZ,
                head_azimuth: 0.1 * k as f64,
                head_elevation: -0.05 * k as f64,
                eye_azimuth: 3.0,
                eye_elevation: 0.0,
                valid: k != 3,
            });
        }
        r.events.push(TrialEvent {
            t: 0.0,
            kind: EventKind::Spawn {
                target: 0,
                class: TargetClass::Marked,
                x: 1.0,
                y: -2.0,
            },
        });
        r.events.push(TrialEvent {
            t: 0.05,
            kind: EventKind::Stop,
        });
        let line = serialize_trial(&r).unwrap();
        assert_eq!(parse_trial(&line, 1).unwrap(), r);
    }

    #[test]
    fn schema_field_names_are_fixed() {
        let mut r = empty_record();
        r.samples.push(GazeSample {
            t: 0.0,
            head_azimuth: 1.0,
            head_elevation: 2.0,
            eye_azimuth: 3.0,
            eye_elevation: 4.0,
            valid: true,
        });
        r.events.push(TrialEvent {
            t: 0.0,
            kind: EventKind::Select {
                target: 7,
                class: TargetClass::Distractor,
            },
        });
        let v: serde_json::Value = serde_json::from_str(&serialize_trial(&r).unwrap()).unwrap();
        for key in ["version", "task", "session", "trial", "level", "seed", "invalid", "events", "samples", "outcome"] {
            assert!(v.get(key).is_some(), "missing field {key}");
        }
        let s = &v["samples"][0];
        for key in ["t", "hx", "hy", "ex", "ey", "v"] {
            assert!(s.get(key).is_some(), "missing sample field {key}");
        }
        let e = &v["events"][0];
        for key in ["t", "kind", "payload"] {
            assert!(e.get(key).is_some(), "missing event field {key}");
        }
        assert_eq!(e["kind"], "select");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_trial("{\"version\":1, \"task\":\"search\"", 42).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 42),
            other => panic!("unexpected error {other:?}"),
        }
    }

    fn arb_sample() -> impl Strategy<Value = GazeSample> {
        (
            0.0..60.0f64,
            -180.0..180.0f64,
            -90.0..90.0f64,
            -25.0..25.0f64,
            -25.0..25.0f64,
            any::<bool>(),
        )
            .prop_map(|(t, hx, hy, ex, ey, v)| GazeSample {
                t,
                head_azimuth: hx,
                head_elevation: hy,
                eye_azimuth: ex,
                eye_elevation: ey,
                valid: v,
            })
    }

    fn arb_event(duration: f64) -> impl Strategy<Value = TrialEvent> {
        let kind = prop_oneof![
            Just(EventKind::TrialStart),
            Just(EventKind::Stop),
            Just(EventKind::GoalReached),
            Just(EventKind::Timeout),
            (any::<u32>(), any::<bool>())
                .prop_map(|(target, correct)| EventKind::Selection { target, correct }),
            (any::<u32>(), -40.0..40.0f64, -30.0..30.0f64).prop_map(|(target, x, y)| {
                EventKind::Spawn {
                    target,
                    class: TargetClass::Marked,
                    x,
                    y,
                }
            }),
            (any::<u32>(), 0.0..360.0f64)
                .prop_map(|(target, heading)| EventKind::HeadingChange { target, heading }),
            any::<u32>().prop_map(|obstacle| EventKind::Collision { obstacle }),
        ];
        (0.0..=1.0f64, kind).prop_map(move |(frac, kind)| TrialEvent {
            t: frac * duration,
            kind,
        })
    }

    proptest! {
        // Round-trip is the identity on the full record domain.
        #[test]
        fn fuzzed_record_round_trips(
            session in 1u32..=20,
            trial in 1u32..=500,
            level in 1u32..=100,
            seed in any::<u64>(),
            invalid in any::<bool>(),
            mut samples in prop::collection::vec(arb_sample(), 0..40),
            events in prop::collection::vec(arb_event(10.0), 0..10),
        ) {
            samples.sort_by(|a, b| a.t.total_cmp(&b.t));
            let mut events = events;
            events.sort_by(|a, b| a.t.total_cmp(&b.t));
            // keep events within the sampled duration
            let dur = samples.last().map(|s| s.t).unwrap_or(10.0);
            for e in &mut events {
                e.t = e.t.min(dur);
            }
            let r = TrialRecord {
                version: SCHEMA_VERSION,
                task: TaskKind::Navigation,
                session, trial, level, seed, invalid,
                events, samples,
                outcome: Outcome::Navigation { duration: dur, collisions: 2, timeout: false },
            };
            let line = serialize_trial(&r).unwrap();
            let back = parse_trial(&line, 1).unwrap();
            prop_assert_eq!(back, r);
        }
    }
}
