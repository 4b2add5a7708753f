//! Offline gaze analytics: preprocessing, adaptive-threshold saccade
//! detection, the five gaze parameters, and the trial-exclusion rules.
//!
//! Detection follows the adaptive velocity-threshold scheme: positions
//! are smoothed with a five-sample moving average (~55 ms at 90 Hz),
//! angular velocities computed, per-trial mean and standard deviation
//! estimated over sub-50°/s samples, and saccades registered where the
//! velocity exceeds `mu + 6*sigma`, extended to onset/end at
//! `mu + 3*sigma`.

use crate::error::Error;
use crate::geometry::{angular_distance, local_polar, wrap_degrees, AngularPos};
use crate::mask::FieldBoundary;
use crate::model::{
    GazeSample, TrialRecord, HEALTHY_FIELD_HEIGHT_DEG, HEALTHY_FIELD_WIDTH_DEG,
};
use crate::Result;
use serde::{Deserialize, Serialize};

/// How the 50°/s prefilter is applied before estimating mu/sigma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PrefilterMode {
    /// Samples at or above the cutoff are excluded from the estimate
    /// (the standard adaptive-threshold reading).
    #[default]
    Gate,
    /// Velocities are saturated at the cutoff instead of dropped.
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaccadeDetectorParams {
    /// Moving-average window, samples.
    pub smoothing_window: usize,
    /// Velocity prefilter cutoff, degrees/second.
    pub velocity_prefilter: f64,
    /// Peak threshold multiplier: v_max = mu + k_peak * sigma.
    pub k_peak: f64,
    /// Onset/end threshold multiplier: v_onset = mu + k_onset * sigma.
    pub k_onset: f64,
    pub prefilter_mode: PrefilterMode,
}

impl Default for SaccadeDetectorParams {
    fn default() -> Self {
        SaccadeDetectorParams {
            smoothing_window: 5,
            velocity_prefilter: 50.0,
            k_peak: 6.0,
            k_onset: 3.0,
            prefilter_mode: PrefilterMode::Gate,
        }
    }
}

/// Detector thresholds derived for one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorThresholds {
    pub mu: f64,
    pub sigma: f64,
    pub v_max: f64,
    pub v_onset: f64,
}

/// One detected saccade.
#[derive(Debug, Clone, PartialEq)]
pub struct SaccadeEvent {
    pub t_onset: f64,
    pub t_end: f64,
    /// Great-circle amplitude between onset and end gaze, degrees.
    pub amplitude: f64,
    /// Path length of the head orientation over the saccade, degrees.
    pub head_amplitude: f64,
    /// Path length of the eye-in-head orientation, degrees.
    pub eye_amplitude: f64,
    /// Net azimuth / elevation displacement magnitudes, degrees.
    pub azimuth_travel: f64,
    pub elevation_travel: f64,
    /// Endpoint lies outside the area visible at onset. Filled by
    /// [`classify_exploratory`]; false until classified.
    pub exploratory: bool,
    pub onset_index: usize,
    pub end_index: usize,
    pub onset_gaze: AngularPos,
    pub end_gaze: AngularPos,
}

impl SaccadeEvent {
    /// head / eye contribution ratio; +inf when the eye did not move
    /// (excluded from trial averages).
    pub fn head_eye_ratio(&self) -> f64 {
        if self.eye_amplitude == 0.0 {
            f64::INFINITY
        } else {
            self.head_amplitude / self.eye_amplitude
        }
    }
}

fn smooth_directions(trace: &[GazeSample], window: usize) -> Vec<AngularPos> {
    let half = window / 2;
    let dirs: Vec<[f64; 3]> = trace.iter().map(|s| s.combined().direction()).collect();
    let n = dirs.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let mut acc = [0.0; 3];
        for d in &dirs[lo..=hi] {
            acc[0] += d[0];
            acc[1] += d[1];
            acc[2] += d[2];
        }
        let norm = (acc[0] * acc[0] + acc[1] * acc[1] + acc[2] * acc[2]).sqrt();
        out.push(AngularPos::from_direction([
            acc[0] / norm,
            acc[1] / norm,
            acc[2] / norm,
        ]));
    }
    out
}

/// Detects saccades in a trace. Saccades containing invalid samples are
/// voided (conservative). Returns the events and the thresholds used.
pub fn detect_saccades(
    trace: &[GazeSample],
    params: &SaccadeDetectorParams,
) -> Result<(Vec<SaccadeEvent>, DetectorThresholds)> {
    let n = trace.len();
    if trace.iter().filter(|s| s.valid).count() < params.smoothing_window {
        return Err(Error::Degenerate(format!(
            "trace has fewer than {} valid samples",
            params.smoothing_window
        )));
    }
    let smoothed = smooth_directions(trace, params.smoothing_window);

    // angular velocity per sample; v[i] spans (i-1, i]
    let mut velocity = vec![0.0f64; n];
    let mut vel_valid = vec![false; n];
    for i in 1..n {
        let dt = trace[i].t - trace[i - 1].t;
        if dt > 0.0 {
            velocity[i] = angular_distance(smoothed[i - 1], smoothed[i]) / dt;
            vel_valid[i] = trace[i].valid && trace[i - 1].valid;
        }
    }

    // per-trial mu/sigma over prefiltered velocities
    let mut acc = Vec::with_capacity(n);
    for i in 1..n {
        if !vel_valid[i] {
            continue;
        }
        match params.prefilter_mode {
            PrefilterMode::Gate => {
                if velocity[i] < params.velocity_prefilter {
                    acc.push(velocity[i]);
                }
            }
            PrefilterMode::Clamp => acc.push(velocity[i].min(params.velocity_prefilter)),
        }
    }
    if acc.is_empty() {
        return Err(Error::Degenerate(
            "all velocity samples exceed the prefilter cutoff".into(),
        ));
    }
    let mu = acc.iter().sum::<f64>() / acc.len() as f64;
    let var = if acc.len() > 1 {
        acc.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (acc.len() - 1) as f64
    } else {
        0.0
    };
    let sigma = var.sqrt();
    let thresholds = DetectorThresholds {
        mu,
        sigma,
        v_max: mu + params.k_peak * sigma,
        v_onset: mu + params.k_onset * sigma,
    };

    // peaks above v_max, extended to the onset threshold on both sides
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 1;
    while i < n {
        if velocity[i] > thresholds.v_max {
            let mut lo = i;
            while lo > 1 && velocity[lo - 1] > thresholds.v_onset {
                lo -= 1;
            }
            let mut hi = i;
            while hi + 1 < n && velocity[hi + 1] > thresholds.v_onset {
                hi += 1;
            }
            // merge events separated by less than one sample
            if let Some(last) = runs.last_mut() {
                if lo <= last.1 + 1 {
                    last.1 = hi;
                    i = hi + 1;
                    continue;
                }
            }
            runs.push((lo, hi));
            i = hi + 1;
        } else {
            i += 1;
        }
    }

    let mut events = Vec::with_capacity(runs.len());
    'run: for (lo, hi) in runs {
        let onset_index = lo - 1;
        let end_index = hi;
        for s in &trace[onset_index..=end_index] {
            if !s.valid {
                continue 'run; // voided, but already counted in the budget
            }
        }
        let onset_gaze = smoothed[onset_index];
        let end_gaze = smoothed[end_index];
        let mut head_amplitude = 0.0;
        let mut eye_amplitude = 0.0;
        for k in onset_index..end_index {
            head_amplitude += angular_distance(trace[k].head(), trace[k + 1].head());
            eye_amplitude += angular_distance(trace[k].eye(), trace[k + 1].eye());
        }
        events.push(SaccadeEvent {
            t_onset: trace[onset_index].t,
            t_end: trace[end_index].t,
            amplitude: angular_distance(onset_gaze, end_gaze),
            head_amplitude,
            eye_amplitude,
            azimuth_travel: wrap_degrees(end_gaze.azimuth - onset_gaze.azimuth).abs(),
            elevation_travel: (end_gaze.elevation - onset_gaze.elevation).abs(),
            exploratory: false,
            onset_index,
            end_index,
            onset_gaze,
            end_gaze,
        });
    }
    Ok((events, thresholds))
}

/// Whether a saccade ends outside the area visible at its onset: the
/// endpoint's eccentricity (relative to the onset gaze) exceeds the field
/// extent along that direction.
pub fn classify_exploratory(
    saccade: &SaccadeEvent,
    boundary: &FieldBoundary,
    gaze_at_onset: AngularPos,
) -> bool {
    let frame = gaze_at_onset.rotation();
    let (ecc, meridian) = local_polar(&frame, saccade.end_gaze);
    ecc > boundary.extent_at(meridian)
}

/// Head/eye decomposition of one saccade (already carried on the event).
pub fn decompose_head_eye(saccade: &SaccadeEvent) -> (f64, f64) {
    (saccade.head_amplitude, saccade.eye_amplitude)
}

// ---------------------------------------------------------------------------
// Dynamic Visual Field

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DvfParams {
    /// Sliding window, seconds.
    pub window: f64,
    /// Window stride, seconds.
    pub stride: f64,
    /// Raster cell size, degrees.
    pub cell: f64,
}

impl Default for DvfParams {
    fn default() -> Self {
        DvfParams {
            window: 3.0,
            stride: 0.5,
            cell: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DvfResult {
    /// Mean observed fraction of the healthy 180°x135° area, percent.
    pub percent: f64,
    /// The trace was shorter than one window; a single truncated window
    /// was used.
    pub truncated: bool,
}

/// Computes the Dynamic Visual Field: the fraction of the reference
/// 180°x135° area that fell inside the (gaze-centered) field at any
/// sample within a sliding window, averaged over windows. The raster is
/// planar in azimuth/elevation, matching the flat-board definition of the
/// reference area.
pub fn dynamic_visual_field(
    trace: &[GazeSample],
    boundary: &FieldBoundary,
    params: &DvfParams,
) -> Result<DvfResult> {
    if trace.is_empty() {
        return Err(Error::Degenerate("empty trace".into()));
    }
    let nx = (HEALTHY_FIELD_WIDTH_DEG / params.cell).round() as usize;
    let ny = (HEALTHY_FIELD_HEIGHT_DEG / params.cell).round() as usize;
    let total = nx * ny;
    let words = total.div_ceil(64);
    let t_end = trace.last().unwrap().t;

    // per-stride observed bitsets; window k ORs window/stride of them
    let duration = t_end;
    let truncated = duration < params.window;
    let n_strides = ((duration / params.stride).ceil() as usize).max(1);
    let mut strides: Vec<Vec<u64>> = vec![vec![0u64; words]; n_strides];

    let max_ext = boundary.max_extent();
    let half_w = HEALTHY_FIELD_WIDTH_DEG / 2.0;
    let half_h = HEALTHY_FIELD_HEIGHT_DEG / 2.0;
    let mut last_marked: Option<(usize, AngularPos)> = None;
    for s in trace {
        if !s.valid {
            continue;
        }
        let gaze = s.combined();
        let stride_idx = ((s.t / params.stride).floor() as usize).min(n_strides - 1);
        // re-stamp only when the gaze moved half a cell or the stride is new
        if let Some((idx, prev)) = last_marked {
            if idx == stride_idx && angular_distance(prev, gaze) < params.cell / 2.0 {
                continue;
            }
        }
        last_marked = Some((stride_idx, gaze));
        let bits = &mut strides[stride_idx];
        // bounding box of the field around the gaze, planar offsets
        let x_lo = (((gaze.azimuth - max_ext + half_w) / params.cell).floor() as isize).max(0);
        let x_hi =
            (((gaze.azimuth + max_ext + half_w) / params.cell).ceil() as isize).min(nx as isize);
        let y_lo = (((gaze.elevation - max_ext + half_h) / params.cell).floor() as isize).max(0);
        let y_hi =
            (((gaze.elevation + max_ext + half_h) / params.cell).ceil() as isize).min(ny as isize);
        for iy in y_lo..y_hi {
            let cy = -half_h + (iy as f64 + 0.5) * params.cell;
            let dy = cy - gaze.elevation;
            for ix in x_lo..x_hi {
                let cell_idx = iy as usize * nx + ix as usize;
                if bits[cell_idx / 64] & (1 << (cell_idx % 64)) != 0 {
                    continue;
                }
                let cx = -half_w + (ix as f64 + 0.5) * params.cell;
                let dx = cx - gaze.azimuth;
                let ecc = (dx * dx + dy * dy).sqrt();
                if ecc > max_ext {
                    continue;
                }
                let meridian = dy.atan2(dx).to_degrees();
                if ecc <= boundary.extent_at(meridian) {
                    bits[cell_idx / 64] |= 1 << (cell_idx % 64);
                }
            }
        }
    }

    // windows start at t=0 with the configured stride; full windows only
    // (a short trace yields one truncated window)
    let strides_per_window = (params.window / params.stride).round() as usize;
    let window_count = if truncated {
        1
    } else {
        // last window start <= duration - window
        ((duration - params.window) / params.stride).floor() as usize + 1
    };
    let mut acc = 0.0;
    let mut word_or = vec![0u64; words];
    for w in 0..window_count {
        let first = w;
        let last = if truncated {
            n_strides
        } else {
            (w + strides_per_window).min(n_strides)
        };
        word_or.fill(0);
        for stride in strides.iter().take(last).skip(first) {
            for (acc_w, &s_w) in word_or.iter_mut().zip(stride.iter()) {
                *acc_w |= s_w;
            }
        }
        let observed: u32 = word_or.iter().map(|w| w.count_ones()).sum();
        acc += observed as f64 / total as f64 * 100.0;
    }
    Ok(DvfResult {
        percent: acc / window_count as f64,
        truncated,
    })
}

// ---------------------------------------------------------------------------
// per-trial metrics and exclusion

/// The five gaze parameters for one analyzed trial. Ratio parameters are
/// `None` when undefined (no saccades, or no finite per-saccade ratio).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialGazeMetrics {
    pub dvf_percent: f64,
    pub exploratory_ratio: Option<f64>,
    pub saccade_frequency: f64,
    pub head_eye_ratio: Option<f64>,
    pub elevation_azimuth_ratio: Option<f64>,
    pub invalid_frame_ratio: f64,
    pub dvf_truncated: bool,
    pub saccade_count: u32,
}

/// Outcome of analyzing one trial's gaze trace.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialAnalysis {
    Analyzed(TrialGazeMetrics),
    /// More than 10% invalid frames.
    Excluded { invalid_frame_ratio: f64 },
    /// No eye-tracking data at all.
    Missing,
    /// Structurally present but detector-degenerate; folded into the
    /// excluded count with the reason retained.
    Degenerate { reason: String },
}

/// Invalid-frame exclusion threshold.
pub const INVALID_RATIO_THRESHOLD: f64 = 0.10;

/// Computes the five parameters for one trial, applying the exclusion
/// decision first.
pub fn trial_metrics(
    record: &TrialRecord,
    boundary: &FieldBoundary,
    detector: &SaccadeDetectorParams,
    dvf: &DvfParams,
) -> TrialAnalysis {
    let total = record.samples.len();
    if total == 0 {
        return TrialAnalysis::Missing;
    }
    let invalid = record.samples.iter().filter(|s| !s.valid).count();
    let invalid_frame_ratio = invalid as f64 / total as f64;
    if invalid_frame_ratio > INVALID_RATIO_THRESHOLD {
        return TrialAnalysis::Excluded {
            invalid_frame_ratio,
        };
    }
    let (mut saccades, _thresholds) = match detect_saccades(&record.samples, detector) {
        Ok(r) => r,
        Err(e) => {
            return TrialAnalysis::Degenerate {
                reason: e.to_string(),
            }
        }
    };
    for s in saccades.iter_mut() {
        s.exploratory = classify_exploratory(s, boundary, s.onset_gaze);
    }
    let dvf_result = match dynamic_visual_field(&record.samples, boundary, dvf) {
        Ok(r) => r,
        Err(e) => {
            return TrialAnalysis::Degenerate {
                reason: e.to_string(),
            }
        }
    };
    let duration = record.duration();
    let count = saccades.len() as u32;
    let saccade_frequency = if duration > 0.0 {
        count as f64 / duration
    } else {
        0.0
    };
    let exploratory_ratio = if count > 0 {
        Some(saccades.iter().filter(|s| s.exploratory).count() as f64 / count as f64)
    } else {
        None
    };
    let finite_ratios: Vec<f64> = saccades
        .iter()
        .map(|s| s.head_eye_ratio())
        .filter(|r| r.is_finite())
        .collect();
    let head_eye_ratio = if finite_ratios.is_empty() {
        None
    } else {
        Some(finite_ratios.iter().sum::<f64>() / finite_ratios.len() as f64)
    };
    let az_total: f64 = saccades.iter().map(|s| s.azimuth_travel).sum();
    let el_total: f64 = saccades.iter().map(|s| s.elevation_travel).sum();
    let elevation_azimuth_ratio = if count > 0 && az_total > 0.0 {
        Some(el_total / az_total)
    } else {
        None
    };
    TrialAnalysis::Analyzed(TrialGazeMetrics {
        dvf_percent: dvf_result.percent,
        exploratory_ratio,
        saccade_frequency,
        head_eye_ratio,
        elevation_azimuth_ratio,
        invalid_frame_ratio,
        dvf_truncated: dvf_result.truncated,
        saccade_count: count,
    })
}

/// Bookkeeping over a corpus: `analyzed + missing + excluded == total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExclusionSummary {
    pub total: usize,
    pub missing: usize,
    pub excluded: usize,
    pub analyzed: usize,
}

impl ExclusionSummary {
    pub fn add(&mut self, analysis: &TrialAnalysis) {
        self.total += 1;
        match analysis {
            TrialAnalysis::Analyzed(_) => self.analyzed += 1,
            TrialAnalysis::Missing => self.missing += 1,
            TrialAnalysis::Excluded { .. } | TrialAnalysis::Degenerate { .. } => {
                self.excluded += 1
            }
        }
    }

    pub fn balanced(&self) -> bool {
        self.analyzed + self.missing + self.excluded == self.total
    }
}
