//! Shared domain types and the canonical trial-log schema.
//!
//! All types here are immutable value data and safe to share across
//! threads. Timestamps are double-precision seconds, angles
//! double-precision degrees.

use crate::error::Error;
use crate::geometry::AngularPos;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Current trial-log schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Number of meridians in a visual-field profile (15° spacing).
pub const MERIDIAN_COUNT: usize = 24;

/// Angular spacing between adjacent meridians, degrees.
pub const MERIDIAN_STEP_DEG: f64 = 15.0;

/// Reference extent of a healthy visual field: 180° wide, 135° tall.
pub const HEALTHY_FIELD_WIDTH_DEG: f64 = 180.0;
pub const HEALTHY_FIELD_HEIGHT_DEG: f64 = 135.0;

/// Nominal eye-tracker sampling rate, Hz.
pub const SAMPLE_RATE_HZ: f64 = 90.0;

/// One timestamped head+eye orientation frame; the atom of every trace.
///
/// `head` is the head orientation in the world frame, `eye` the
/// eye-in-head orientation. The combined world-frame gaze is
/// `combine_gaze(head, eye)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    /// Seconds since trial start.
    pub t: f64,
    #[serde(rename = "hx")]
    pub head_azimuth: f64,
    #[serde(rename = "hy")]
    pub head_elevation: f64,
    #[serde(rename = "ex")]
    pub eye_azimuth: f64,
    #[serde(rename = "ey")]
    pub eye_elevation: f64,
    #[serde(rename = "v")]
    pub valid: bool,
}

impl GazeSample {
    pub fn head(&self) -> AngularPos {
        AngularPos::new(self.head_azimuth, self.head_elevation)
    }

    pub fn eye(&self) -> AngularPos {
        AngularPos::new(self.eye_azimuth, self.eye_elevation)
    }

    /// World-frame gaze direction for this frame.
    pub fn combined(&self) -> AngularPos {
        crate::geometry::combine_gaze(self.head(), self.eye())
    }
}

/// Which eye a measurement belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eye {
    Left,
    Right,
}

/// Per-eye radial visual-field extents at 24 meridians (15° spacing).
///
/// `left[k]` / `right[k]` is the extent in degrees along the meridian at
/// angle `15°·k` (0° = right, counter-clockwise). Extents are bounded by
/// the perimetry sweep start at 45°.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualFieldProfile {
    pub label: String,
    pub left: [f64; MERIDIAN_COUNT],
    pub right: [f64; MERIDIAN_COUNT],
}

impl VisualFieldProfile {
    /// A profile with the same radial extent on every meridian of both eyes.
    pub fn circular(label: impl Into<String>, radius: f64) -> Result<Self> {
        Self::new(label, [radius; MERIDIAN_COUNT], [radius; MERIDIAN_COUNT])
    }

    /// Circular per eye with distinct radii (how the bundled profiles are
    /// built from per-eye field diameters).
    pub fn circular_per_eye(label: impl Into<String>, left: f64, right: f64) -> Result<Self> {
        Self::new(label, [left; MERIDIAN_COUNT], [right; MERIDIAN_COUNT])
    }

    pub fn new(
        label: impl Into<String>,
        left: [f64; MERIDIAN_COUNT],
        right: [f64; MERIDIAN_COUNT],
    ) -> Result<Self> {
        for &e in left.iter().chain(right.iter()) {
            if !(e > 0.0 && e <= 45.0) {
                return Err(Error::config(format!(
                    "visual field extent {e} out of range (0, 45]"
                )));
            }
        }
        Ok(VisualFieldProfile {
            label: label.into(),
            left,
            right,
        })
    }

    pub fn extents(&self, eye: Eye) -> &[f64; MERIDIAN_COUNT] {
        match eye {
            Eye::Left => &self.left,
            Eye::Right => &self.right,
        }
    }

    /// Meridian angle in degrees for index `k`.
    pub fn meridian_angle(k: usize) -> f64 {
        k as f64 * MERIDIAN_STEP_DEG
    }

    /// Cyclopean extents: per-meridian average of the two eyes. A single
    /// combined gaze direction is used throughout, so masks and agent
    /// perception work on this averaged field.
    pub fn cyclopean(&self) -> [f64; MERIDIAN_COUNT] {
        let mut out = [0.0; MERIDIAN_COUNT];
        for k in 0..MERIDIAN_COUNT {
            out[k] = 0.5 * (self.left[k] + self.right[k]);
        }
        out
    }

    /// Mean radius of the cyclopean field, degrees.
    pub fn mean_radius(&self) -> f64 {
        self.cyclopean().iter().sum::<f64>() / MERIDIAN_COUNT as f64
    }
}

/// The three visual tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Tracking,
    Search,
    Navigation,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Tracking, TaskKind::Search, TaskKind::Navigation];

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Tracking => "tracking",
            TaskKind::Search => "search",
            TaskKind::Navigation => "navigation",
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Spawn classification for task targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetClass {
    Marked,
    Unmarked,
    Distractor,
}

/// A single timestamped task event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEvent {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Task events, serialized as `{kind, payload}` alongside the timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum EventKind {
    TrialStart,
    /// A target entered the scene.
    Spawn {
        target: u32,
        class: TargetClass,
        x: f64,
        y: f64,
    },
    /// A tracking target received its marked indicator.
    Mark { target: u32 },
    /// A tracking target changed its movement heading (degrees).
    HeadingChange { target: u32, heading: f64 },
    /// Tracking motion phase ended; indicators disappear.
    Stop,
    /// Tracking selection-phase pick.
    Selection { target: u32, correct: bool },
    /// Search-task selection of a marked target or distractor.
    Select { target: u32, class: TargetClass },
    /// Search-task replacement spawned outside the visual field.
    /// `fallback` marks the degenerate uniform-in-area path taken when
    /// the field covers the whole play area.
    Respawn {
        target: u32,
        x: f64,
        y: f64,
        fallback: bool,
    },
    /// Navigation collision; walls use ids >= 1000, obstacles 0..12.
    Collision { obstacle: u32 },
    GoalReached,
    Timeout,
}

/// Task-specific raw performance attached to a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Outcome {
    Tracking {
        incorrect_selections: u32,
        score: u8,
        /// Selection phase ran out of time before all marks were found.
        forced_failure: bool,
    },
    Search {
        targets_found: u32,
        adjusted_score: f64,
        area_w: f64,
        area_h: f64,
    },
    Navigation {
        duration: f64,
        collisions: u32,
        timeout: bool,
    },
}

/// One task trial: configuration, event stream, gaze trace and outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub version: u32,
    pub task: TaskKind,
    /// Training session this trial belongs to, 1..=20.
    pub session: u32,
    /// Trial index within the session, 1-based.
    pub trial: u32,
    /// Difficulty level, 1..=100.
    pub level: u32,
    pub seed: u64,
    /// User-marked invalid trial (interrupted execution).
    pub invalid: bool,
    pub events: Vec<TrialEvent>,
    pub samples: Vec<GazeSample>,
    pub outcome: Outcome,
}

impl TrialRecord {
    /// Trial duration: the span of the gaze trace, falling back to the
    /// last event when a record carries no samples.
    pub fn duration(&self) -> f64 {
        match self.samples.last() {
            Some(s) => s.t,
            None => self.events.last().map(|e| e.t).unwrap_or(0.0),
        }
    }

    /// Checks structural invariants; used by the parser and in tests.
    pub fn validate(&self) -> Result<()> {
        if !(1..=100).contains(&self.level) {
            return Err(Error::config(format!("level {} out of [1,100]", self.level)));
        }
        let duration = self.duration();
        for e in &self.events {
            if e.t < 0.0 || e.t > duration + 1e-9 {
                return Err(Error::config(format!(
                    "event at t={} outside [0, {duration}]",
                    e.t
                )));
            }
        }
        let mut prev = f64::NEG_INFINITY;
        for s in &self.samples {
            if s.t < prev {
                return Err(Error::config("sample timestamps must be non-decreasing"));
            }
            prev = s.t;
        }
        Ok(())
    }
}

/// Rounds synthesized values so the JSONL logs stay compact; 1e-6° and
/// 1e-6 s are far below every tolerance in the analytics.
pub fn quantize(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_rejects_out_of_range_extent() {
        assert!(VisualFieldProfile::circular("p", 0.0).is_err());
        assert!(VisualFieldProfile::circular("p", 45.1).is_err());
        assert!(VisualFieldProfile::circular("p", 45.0).is_ok());
    }

    #[test]
    fn cyclopean_averages_eyes() {
        let p = VisualFieldProfile::circular_per_eye("p", 10.0, 14.0).unwrap();
        assert_eq!(p.cyclopean()[0], 12.0);
        assert_eq!(p.mean_radius(), 12.0);
    }

    #[test]
    fn event_times_validated_against_duration() {
        let mut rec = TrialRecord {
            version: SCHEMA_VERSION,
            task: TaskKind::Tracking,
            session: 1,
            trial: 1,
            level: 1,
            seed: 0,
            invalid: false,
            events: vec![TrialEvent {
                t: 5.0,
                kind: EventKind::Stop,
            }],
            samples: vec![GazeSample {
                t: 1.0,
                head_azimuth: 0.0,
                head_elevation: 0.0,
                eye_azimuth: 0.0,
                eye_elevation: 0.0,
                valid: true,
            }],
            outcome: Outcome::Tracking {
                incorrect_selections: 0,
                score: 2,
                forced_failure: false,
            },
        };
        // event beyond the sampled span
        assert!(rec.validate().is_err());
        rec.events[0].t = 0.5;
        assert!(rec.validate().is_ok());
    }
}
