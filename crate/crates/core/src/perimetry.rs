//! Kinetic perimetry: a white target sweeps inward from 45° eccentricity
//! at 3°/s along each of 24 meridians while the responder fixates a
//! central marker; the crossing eccentricity at the detection frame is
//! recorded. Sweeps whose fixation drifts beyond tolerance are aborted
//! and re-queued.

use crate::error::Error;
use crate::exec;
use crate::geometry::{from_local_polar, AngularPos, Rotation};
use crate::model::{Eye, VisualFieldProfile, MERIDIAN_COUNT, MERIDIAN_STEP_DEG};
use crate::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// What counts as the target "reaching" the field boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMode {
    /// The target center crosses the boundary; unbiased w.r.t. the stored
    /// extent.
    #[default]
    Center,
    /// The leading edge crosses first; biases measurements outward by the
    /// target radius.
    LeadingEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerimetryConfig {
    /// Sweep start eccentricity, degrees.
    pub start_eccentricity: f64,
    /// Inward target speed, degrees/second.
    pub target_speed: f64,
    /// Stimulus radius, degrees.
    pub target_radius: f64,
    /// Angular spacing between meridians, degrees; must divide 360.
    pub meridian_step: f64,
    /// Maximum tolerated fixation error before a sweep is aborted, degrees.
    pub fixation_tolerance: f64,
    /// Display refresh rate driving the sweep, Hz.
    pub frame_rate: f64,
    pub detection_mode: DetectionMode,
    /// Attempts per meridian before recording a missing value.
    pub max_attempts: u32,
}

impl Default for PerimetryConfig {
    fn default() -> Self {
        PerimetryConfig {
            start_eccentricity: 45.0,
            target_speed: 3.0,
            target_radius: 0.72,
            meridian_step: MERIDIAN_STEP_DEG,
            fixation_tolerance: 2.0,
            frame_rate: 75.0,
            detection_mode: DetectionMode::Center,
            max_attempts: 3,
        }
    }
}

impl PerimetryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.start_eccentricity <= 0.0 || self.target_speed <= 0.0 || self.frame_rate <= 0.0 {
            return Err(Error::config("perimetry: speeds and extents must be positive"));
        }
        if self.meridian_step <= 0.0 || (360.0 / self.meridian_step).fract().abs() > 1e-9 {
            return Err(Error::config("perimetry: meridian step must divide 360"));
        }
        Ok(())
    }

    /// Sweep duration until the target reaches the center.
    pub fn sweep_duration(&self) -> f64 {
        self.start_eccentricity / self.target_speed
    }

    /// Eccentricity of the target at sweep time `t`.
    pub fn eccentricity_at(&self, t: f64) -> f64 {
        self.start_eccentricity - self.target_speed * t
    }
}

/// Position of the sweep target at time `t` along `meridian` degrees, or
/// `None` once the sweep is complete (target past the center).
pub fn target_position(meridian: f64, t: f64, cfg: &PerimetryConfig) -> Option<AngularPos> {
    let ecc = cfg.eccentricity_at(t);
    if ecc < 0.0 {
        return None;
    }
    Some(from_local_polar(&Rotation::IDENTITY, ecc, meridian))
}

/// Per-frame responder interface for one sweep.
pub trait SweepResponder {
    /// Where the responder is currently fixating (should be the center).
    fn fixation(&mut self, t: f64) -> AngularPos;
    /// Whether the responder reports the target as seen at this frame.
    fn responds(&mut self, target_eccentricity: f64, t: f64) -> bool;
}

/// Geometric ideal responder: knows the true extent along the current
/// meridian, reacts `reaction_delay` seconds after the (continuous)
/// crossing, and fixates the center with optional isotropic noise.
pub struct IdealResponder {
    crossing_time: f64,
    reaction_delay: f64,
    fixation_noise: f64,
    rng: ChaCha8Rng,
}

impl IdealResponder {
    pub fn new(true_extent: f64, reaction_delay: f64, cfg: &PerimetryConfig, seed: u64) -> Self {
        let threshold = match cfg.detection_mode {
            DetectionMode::Center => true_extent,
            DetectionMode::LeadingEdge => true_extent + cfg.target_radius,
        };
        // continuous time at which the target reaches the threshold
        let crossing_time = (cfg.start_eccentricity - threshold) / cfg.target_speed;
        IdealResponder {
            crossing_time: crossing_time.max(0.0),
            reaction_delay,
            fixation_noise: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_fixation_noise(mut self, sigma: f64) -> Self {
        self.fixation_noise = sigma;
        self
    }
}

impl SweepResponder for IdealResponder {
    fn fixation(&mut self, _t: f64) -> AngularPos {
        if self.fixation_noise == 0.0 {
            return AngularPos::CENTER;
        }
        let r: f64 = self.fixation_noise * gaussian(&mut self.rng);
        let th: f64 = self.rng.gen_range(0.0..std::f64::consts::TAU);
        AngularPos::new(r.abs() * th.cos(), r.abs() * th.sin())
    }

    fn responds(&mut self, _target_eccentricity: f64, t: f64) -> bool {
        t >= self.crossing_time + self.reaction_delay
    }
}

/// A responder that never detects the target.
pub struct NeverResponder;

impl SweepResponder for NeverResponder {
    fn fixation(&mut self, _t: f64) -> AngularPos {
        AngularPos::CENTER
    }
    fn responds(&mut self, _e: f64, _t: f64) -> bool {
        false
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Result of one inward sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepOutcome {
    /// Eccentricity at the detection frame.
    Crossed(f64),
    /// Fixation left the tolerance zone; the sweep produced no crossing.
    Aborted,
    /// Target reached the center undetected: no measurable field on this
    /// meridian, recorded as 0.
    NoDetection,
}

/// Runs a single sweep along `meridian` with a per-frame state machine at
/// the configured frame rate.
pub fn run_sweep<R: SweepResponder>(
    meridian: f64,
    responder: &mut R,
    cfg: &PerimetryConfig,
) -> SweepOutcome {
    let frame_dt = 1.0 / cfg.frame_rate;
    let mut frame = 0u64;
    loop {
        let t = frame as f64 * frame_dt;
        let ecc = cfg.eccentricity_at(t);
        if ecc < 0.0 {
            return SweepOutcome::NoDetection;
        }
        let fix = responder.fixation(t);
        if crate::geometry::angular_distance(fix, AngularPos::CENTER) > cfg.fixation_tolerance {
            // target disappears; sweep is re-queued by the caller
            return SweepOutcome::Aborted;
        }
        debug_assert!(target_position(meridian, t, cfg).is_some());
        if responder.responds(ecc, t) {
            return SweepOutcome::Crossed(ecc);
        }
        frame += 1;
    }
}

/// One measured meridian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeridianMeasurement {
    /// Meridian angle, degrees.
    pub angle: f64,
    /// Crossing eccentricity; `None` after `max_attempts` aborted sweeps.
    pub crossing: Option<f64>,
}

/// Full kinetic perimetry result: 24 crossings per eye.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerimetryResult {
    pub label: String,
    pub left: Vec<MeridianMeasurement>,
    pub right: Vec<MeridianMeasurement>,
    pub aborted_sweeps: u32,
}

impl PerimetryResult {
    pub fn measurements(&self, eye: Eye) -> &[MeridianMeasurement] {
        match eye {
            Eye::Left => &self.left,
            Eye::Right => &self.right,
        }
    }

    /// Converts to a profile usable for mask construction. Crossings of 0
    /// (or missing meridians) are floored to `floor_extent` so the profile
    /// invariant `extent > 0` holds; the raw result keeps true zeros.
    pub fn to_profile(&self, floor_extent: f64) -> Result<VisualFieldProfile> {
        let grab = |ms: &[MeridianMeasurement]| {
            let mut out = [0.0; MERIDIAN_COUNT];
            for (k, m) in ms.iter().enumerate() {
                out[k] = m.crossing.unwrap_or(floor_extent).max(floor_extent).min(45.0);
            }
            out
        };
        VisualFieldProfile::new(self.label.clone(), grab(&self.left), grab(&self.right))
    }
}

/// Stochastic model from which per-sweep responders are built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResponderModel {
    /// Reaction delay between crossing and report, seconds.
    pub reaction_delay: f64,
    /// Fixation noise sigma, degrees (0 = perfectly steady).
    pub fixation_noise: f64,
    pub seed: u64,
}

impl Default for ResponderModel {
    fn default() -> Self {
        ResponderModel {
            reaction_delay: 0.0,
            fixation_noise: 0.0,
            seed: 0,
        }
    }
}

/// Measures both eyes of `truth` with the given responder model. Each eye
/// is tested individually, one sweep per meridian; sweeps are independent
/// and run through the batch executor.
pub fn run_perimetry(
    truth: &VisualFieldProfile,
    model: &ResponderModel,
    cfg: &PerimetryConfig,
) -> Result<PerimetryResult> {
    cfg.validate()?;
    let meridians = (360.0 / cfg.meridian_step).round() as usize;
    let mut jobs = Vec::with_capacity(meridians * 2);
    for eye in [Eye::Left, Eye::Right] {
        for k in 0..meridians {
            jobs.push((eye, k));
        }
    }
    let results = exec::map_ordered(jobs, |(eye, k)| {
        let angle = k as f64 * cfg.meridian_step;
        let true_extent = truth.extents(eye)[k];
        let mut aborted = 0u32;
        for attempt in 0..cfg.max_attempts {
            let seed = model
                .seed
                .wrapping_mul(0x9e3779b97f4a7c15)
                .wrapping_add((k as u64) << 8 | (eye == Eye::Right) as u64)
                .wrapping_add((attempt as u64) << 32);
            let mut responder = IdealResponder::new(true_extent, model.reaction_delay, cfg, seed)
                .with_fixation_noise(model.fixation_noise);
            match run_sweep(angle, &mut responder, cfg) {
                SweepOutcome::Crossed(e) => {
                    return (eye, MeridianMeasurement { angle, crossing: Some(e) }, aborted)
                }
                SweepOutcome::NoDetection => {
                    return (eye, MeridianMeasurement { angle, crossing: Some(0.0) }, aborted)
                }
                SweepOutcome::Aborted => aborted += 1,
            }
        }
        (eye, MeridianMeasurement { angle, crossing: None }, aborted)
    });

    let mut out = PerimetryResult {
        label: truth.label.clone(),
        left: Vec::with_capacity(meridians),
        right: Vec::with_capacity(meridians),
        aborted_sweeps: 0,
    };
    for (eye, m, aborted) in results {
        out.aborted_sweeps += aborted;
        match eye {
            Eye::Left => out.left.push(m),
            Eye::Right => out.right.push(m),
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// VF profile file format: 24 (angle, extent) pairs per eye.

#[derive(Serialize, Deserialize)]
struct ProfileFileEntry {
    angle: f64,
    extent: f64,
}

#[derive(Serialize, Deserialize)]
struct ProfileFile {
    label: String,
    left: Vec<ProfileFileEntry>,
    right: Vec<ProfileFileEntry>,
}

pub fn write_profile(path: &Path, profile: &VisualFieldProfile) -> Result<()> {
    let to_entries = |e: &[f64; MERIDIAN_COUNT]| {
        e.iter()
            .enumerate()
            .map(|(k, &extent)| ProfileFileEntry {
                angle: VisualFieldProfile::meridian_angle(k),
                extent,
            })
            .collect()
    };
    let file = ProfileFile {
        label: profile.label.clone(),
        left: to_entries(&profile.left),
        right: to_entries(&profile.right),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn read_profile(path: &Path) -> Result<VisualFieldProfile> {
    let text = std::fs::read_to_string(path)?;
    let file: ProfileFile =
        serde_json::from_str(&text).map_err(|e| Error::parse(0, format!("{e}")))?;
    let from_entries = |entries: &[ProfileFileEntry], side: &str| -> Result<[f64; MERIDIAN_COUNT]> {
        if entries.len() != MERIDIAN_COUNT {
            return Err(Error::parse(
                0,
                format!("{side} eye: expected {MERIDIAN_COUNT} meridians, got {}", entries.len()),
            ));
        }
        let mut out = [0.0; MERIDIAN_COUNT];
        for (k, e) in entries.iter().enumerate() {
            let expect = VisualFieldProfile::meridian_angle(k);
            if (e.angle - expect).abs() > 1e-6 {
                return Err(Error::parse(
                    0,
                    format!("{side} eye meridian {k}: angle {} != {expect}", e.angle),
                ));
            }
            out[k] = e.extent;
        }
        Ok(out)
    };
    VisualFieldProfile::new(
        file.label,
        from_entries(&file.left, "left")?,
        from_entries(&file.right, "right")?,
    )
}
