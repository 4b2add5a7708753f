//! Gaze-contingent tunnel-vision masks built from a visual-field profile,
//! visibility queries under an eye/head latency model, and an optional
//! PGM export for visual inspection.
//!
//! Alpha semantics: 0 = fully transparent (inside the field), 1 = fully
//! occluded black. The field boundary linearly interpolates the 24 radial
//! extents over meridian angle, and alpha ramps 0 → 1 linearly across a
//! blur band centered on the boundary.

use crate::error::Error;
use crate::geometry::{combined_rotation, local_polar, AngularPos, Rotation};
use crate::model::{GazeSample, VisualFieldProfile, MERIDIAN_COUNT, MERIDIAN_STEP_DEG};
use crate::Result;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Default blur band width across the field edge, degrees.
pub const DEFAULT_BLUR_DEG: f64 = 2.0;

/// Default raster resolution, degrees per cell.
pub const DEFAULT_RESOLUTION_DEG: f64 = 0.25;

/// Default raster half-extent, degrees.
pub const DEFAULT_HALF_EXTENT_DEG: f64 = 50.0;

/// Display-pipeline latency between a movement and the mask update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    /// End-to-end eye-tracking latency, seconds.
    pub eye_latency: f64,
    /// Motion-to-photon latency for head tracking, seconds.
    pub head_latency: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            eye_latency: 0.079,
            head_latency: 0.005,
        }
    }
}

impl LatencyModel {
    pub const ZERO: LatencyModel = LatencyModel {
        eye_latency: 0.0,
        head_latency: 0.0,
    };
}

/// Radial field boundary: extent as a function of meridian angle, linear
/// between the 24 profile knots. Unlike [`VisualFieldProfile`] the extents
/// here are not capped at 45°, so reference fields (e.g. a full healthy
/// field) can be expressed for analytics.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldBoundary {
    extents: [f64; MERIDIAN_COUNT],
    max_extent: f64,
}

impl FieldBoundary {
    pub fn new(extents: [f64; MERIDIAN_COUNT]) -> Result<Self> {
        if extents.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::config("field boundary extents must be positive"));
        }
        let max_extent = extents.iter().cloned().fold(0.0, f64::max);
        Ok(FieldBoundary { extents, max_extent })
    }

    pub fn circular(radius: f64) -> Result<Self> {
        Self::new([radius; MERIDIAN_COUNT])
    }

    /// Cyclopean boundary of a measured profile (per-meridian average of
    /// the two eyes).
    pub fn from_profile(profile: &VisualFieldProfile) -> Self {
        let extents = profile.cyclopean();
        let max_extent = extents.iter().cloned().fold(0.0, f64::max);
        FieldBoundary { extents, max_extent }
    }

    pub fn extents(&self) -> &[f64; MERIDIAN_COUNT] {
        &self.extents
    }

    pub fn max_extent(&self) -> f64 {
        self.max_extent
    }

    /// Boundary extent along `meridian_deg`, linear interpolation between
    /// adjacent profile knots.
    pub fn extent_at(&self, meridian_deg: f64) -> f64 {
        let a = meridian_deg.rem_euclid(360.0) / MERIDIAN_STEP_DEG;
        let k = a.floor() as usize % MERIDIAN_COUNT;
        let frac = a - a.floor();
        let next = (k + 1) % MERIDIAN_COUNT;
        self.extents[k] * (1.0 - frac) + self.extents[next] * frac
    }

    /// Boundary rotated by a whole number of meridian steps
    /// (counter-clockwise), used by the rotation-consistency tests.
    pub fn rotated_steps(&self, steps: usize) -> FieldBoundary {
        let mut extents = [0.0; MERIDIAN_COUNT];
        for (k, e) in extents.iter_mut().enumerate() {
            *e = self.extents[(k + MERIDIAN_COUNT - steps % MERIDIAN_COUNT) % MERIDIAN_COUNT];
        }
        FieldBoundary {
            extents,
            max_extent: self.max_extent,
        }
    }
}

/// Sampled alpha mask over a local frame centered on gaze, plus the
/// continuous boundary it was built from. Immutable after build.
#[derive(Debug, Clone)]
pub struct MaskRaster {
    boundary: FieldBoundary,
    blur: f64,
    resolution: f64,
    half_extent: f64,
    width: usize,
    alpha: Vec<f32>,
}

/// Builds the alpha mask for a profile's cyclopean field.
pub fn build_mask(vf: &VisualFieldProfile, blur: f64, resolution: f64) -> Result<MaskRaster> {
    MaskRaster::build(FieldBoundary::from_profile(vf), blur, resolution)
}

impl MaskRaster {
    pub fn build(boundary: FieldBoundary, blur: f64, resolution: f64) -> Result<Self> {
        if resolution <= 0.0 {
            return Err(Error::config("mask resolution must be positive"));
        }
        if blur < 0.0 {
            return Err(Error::config("mask blur must be non-negative"));
        }
        let half_extent = DEFAULT_HALF_EXTENT_DEG;
        // cell centers at k*resolution away from the gaze center
        let half_cells = (half_extent / resolution).round() as usize;
        let width = 2 * half_cells + 1;
        let mut alpha = vec![0f32; width * width];
        for iy in 0..width {
            let dy = (iy as f64 - half_cells as f64) * resolution;
            for ix in 0..width {
                let dx = (ix as f64 - half_cells as f64) * resolution;
                alpha[iy * width + ix] =
                    alpha_for_boundary(&boundary, blur, dx, dy) as f32;
            }
        }
        Ok(MaskRaster {
            boundary,
            blur,
            resolution,
            half_extent,
            width,
            alpha,
        })
    }

    pub fn boundary(&self) -> &FieldBoundary {
        &self.boundary
    }

    pub fn blur(&self) -> f64 {
        self.blur
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    /// Continuous alpha at a local offset `(dx, dy)` degrees from the mask
    /// center (dx positive right, dy positive up).
    pub fn alpha_at_offset(&self, dx: f64, dy: f64) -> f64 {
        alpha_for_boundary(&self.boundary, self.blur, dx, dy)
    }

    /// Alpha stored for the raster cell at `(ix, iy)`.
    pub fn cell(&self, ix: usize, iy: usize) -> f64 {
        self.alpha[iy * self.width + ix] as f64
    }

    /// Local offset of the cell center `(ix, iy)`, degrees.
    pub fn cell_offset(&self, ix: usize, iy: usize) -> (f64, f64) {
        let half = (self.width / 2) as f64;
        (
            (ix as f64 - half) * self.resolution,
            (iy as f64 - half) * self.resolution,
        )
    }

    /// Writes the raster as a plain-text PGM (P2) image: white = visible,
    /// black = occluded. Rows run top (positive dy) to bottom.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "P2")?;
        writeln!(w, "{} {}", self.width, self.width)?;
        writeln!(w, "255")?;
        for iy in (0..self.width).rev() {
            let mut line = String::with_capacity(self.width * 4);
            for ix in 0..self.width {
                let v = ((1.0 - self.cell(ix, iy)) * 255.0).round() as u8;
                line.push_str(&v.to_string());
                line.push(' ');
            }
            writeln!(w, "{}", line.trim_end())?;
        }
        Ok(())
    }
}

/// Alpha of the blur-banded boundary at a planar-polar local offset.
fn alpha_for_boundary(boundary: &FieldBoundary, blur: f64, dx: f64, dy: f64) -> f64 {
    let ecc = (dx * dx + dy * dy).sqrt();
    let meridian = dy.atan2(dx).to_degrees();
    alpha_at_polar(boundary, blur, ecc, meridian)
}

fn alpha_at_polar(boundary: &FieldBoundary, blur: f64, ecc: f64, meridian: f64) -> f64 {
    let edge = boundary.extent_at(meridian);
    if blur == 0.0 {
        return if ecc <= edge { 0.0 } else { 1.0 };
    }
    ((ecc - edge) / blur + 0.5).clamp(0.0, 1.0)
}

/// Gaze state used by latency-delayed mask queries: zero-order hold over
/// the recorded samples, falling back to the earliest sample before any
/// history exists (documented startup behavior).
fn sample_at(history: &[GazeSample], t: f64) -> &GazeSample {
    match history.iter().rposition(|s| s.t <= t) {
        Some(idx) => &history[idx],
        None => &history[0],
    }
}

/// Alpha at `world_point` at time `t`, with the mask centered on the
/// latency-delayed gaze: head sampled at `t - head_latency` composed with
/// the eye sampled at `t - eye_latency`.
pub fn visible_at(
    mask: &MaskRaster,
    gaze_history: &[GazeSample],
    world_point: AngularPos,
    t: f64,
    latency: &LatencyModel,
) -> f64 {
    assert!(!gaze_history.is_empty(), "visible_at needs gaze history");
    let head = sample_at(gaze_history, t - latency.head_latency).head();
    let eye = sample_at(gaze_history, t - latency.eye_latency).eye();
    let frame = combined_rotation(head, eye);
    let (ecc, meridian) = local_polar(&frame, world_point);
    alpha_at_polar(&mask.boundary, mask.blur, ecc, meridian)
}

/// Agent-perception convenience: whether `point` falls inside the
/// simulated field for a gaze at `gaze`, with zero latency. True iff
/// alpha < 0.5, i.e. the point is inside the interpolated boundary.
/// Uses the torsion-free frame of the combined gaze direction.
pub fn is_in_simulated_field(
    boundary: &FieldBoundary,
    gaze: AngularPos,
    point: AngularPos,
) -> bool {
    let frame = gaze.rotation();
    let (ecc, meridian) = local_polar(&frame, point);
    ecc <= boundary.extent_at(meridian)
}

/// Same predicate on a pre-built local frame (used when the full
/// head ⊕ eye rotation is available).
pub fn in_field_frame(boundary: &FieldBoundary, frame: &Rotation, point: AngularPos) -> bool {
    let (ecc, meridian) = local_polar(frame, point);
    ecc <= boundary.extent_at(meridian)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SAMPLE_RATE_HZ;
    use approx::assert_abs_diff_eq;

    fn circular_mask(r: f64) -> MaskRaster {
        MaskRaster::build(FieldBoundary::circular(r).unwrap(), 2.0, 0.25).unwrap()
    }

    fn hold(head: AngularPos, eye: AngularPos, n: usize) -> Vec<GazeSample> {
        (0..n)
            .map(|k| GazeSample {
                t: k as f64 / SAMPLE_RATE_HZ,
                head_azimuth: head.azimuth,
                head_elevation: head.elevation,
                eye_azimuth: eye.azimuth,
                eye_elevation: eye.elevation,
                valid: true,
            })
            .collect()
    }

    #[test]
    fn ramp_values_on_circular_field() {
        let m = circular_mask(10.0);
        assert_eq!(m.alpha_at_offset(0.0, 0.0), 0.0);
        assert_abs_diff_eq!(m.alpha_at_offset(10.0, 0.0), 0.5, epsilon = 1e-12);
        assert_eq!(m.alpha_at_offset(12.0, 0.0), 1.0);
        // raster agrees at cell centers
        let half = m.width() / 2;
        assert_eq!(m.cell(half, half), 0.0);
        let cell_at_10 = half + (10.0 / 0.25) as usize;
        assert_abs_diff_eq!(m.cell(cell_at_10, half), 0.5, epsilon = 1e-6);
    }

    #[test]
    fn non_positive_resolution_rejected() {
        assert!(MaskRaster::build(FieldBoundary::circular(10.0).unwrap(), 2.0, 0.0).is_err());
    }

    #[test]
    fn boundary_interpolates_linearly_between_meridians() {
        let mut extents = [10.0; MERIDIAN_COUNT];
        extents[1] = 12.0;
        let b = FieldBoundary::new(extents).unwrap();
        // brute-force fine-meridian scan around the analytic midpoint
        let mut best = f64::NAN;
        let mut best_err = f64::MAX;
        for k in 0..=3000 {
            let ang = k as f64 * 0.005;
            let err = (ang - 7.5).abs();
            if err < best_err {
                best_err = err;
                best = b.extent_at(ang);
            }
        }
        assert_abs_diff_eq!(best, 11.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b.extent_at(7.5), 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.extent_at(0.0), 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.extent_at(15.0), 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.extent_at(352.5), 10.0, epsilon = 1e-9);
        // wrap across 360: midpoint between meridian 23 and meridian 0
        let mut wrapped = [10.0; MERIDIAN_COUNT];
        wrapped[0] = 14.0;
        let bw = FieldBoundary::new(wrapped).unwrap();
        assert_abs_diff_eq!(bw.extent_at(352.5), 12.0, epsilon = 1e-9);
    }

    #[test]
    fn in_field_predicate_basics() {
        let b = FieldBoundary::circular(10.0).unwrap();
        let gaze = AngularPos::new(5.0, -3.0);
        assert!(is_in_simulated_field(&b, gaze, gaze));
        let outside = AngularPos::new(5.0 + 12.0, -3.0);
        assert!(!is_in_simulated_field(&b, gaze, outside));
    }

    #[test]
    fn alpha_monotone_along_outward_rays() {
        let mut extents = [8.0; MERIDIAN_COUNT];
        for (k, e) in extents.iter_mut().enumerate() {
            *e += (k % 5) as f64; // lumpy star shape
        }
        let m = MaskRaster::build(FieldBoundary::new(extents).unwrap(), 2.0, 0.25).unwrap();
        for step in 0..24 {
            let theta = (step as f64 * 15.0 + 7.5).to_radians();
            let mut prev = -1.0;
            for i in 0..200 {
                let ecc = i as f64 * 0.1;
                let a = m.alpha_at_offset(ecc * theta.cos(), ecc * theta.sin());
                assert!(a >= prev - 1e-12, "alpha dipped along ray");
                prev = a;
            }
        }
    }

    #[test]
    fn rotating_profile_permutes_alpha_field() {
        let mut extents = [8.0; MERIDIAN_COUNT];
        extents[3] = 14.0;
        extents[17] = 11.0;
        let b = FieldBoundary::new(extents).unwrap();
        let rotated = b.rotated_steps(1);
        for k in 0..200 {
            let ecc = 0.1 + (k % 40) as f64 * 0.3;
            let th = (k as f64 * 7.31) % 360.0;
            let a0 = alpha_at_polar(&b, 2.0, ecc, th);
            let a1 = alpha_at_polar(&rotated, 2.0, ecc, th + 15.0);
            assert_abs_diff_eq!(a0, a1, epsilon = 1e-12);
        }
    }

    #[test]
    fn stationary_gaze_is_latency_invariant() {
        let m = circular_mask(10.0);
        let history = hold(AngularPos::new(7.0, 2.0), AngularPos::new(-3.0, 1.0), 30);
        let point = AngularPos::new(12.0, 5.0);
        let t = 0.25;
        let a0 = visible_at(&m, &history, point, t, &LatencyModel::ZERO);
        let a1 = visible_at(&m, &history, point, t, &LatencyModel::default());
        assert_abs_diff_eq!(a0, a1, epsilon = 1e-12);
        // gaze center itself is always transparent
        let center = crate::geometry::combine_gaze(history[0].head(), history[0].eye());
        assert_eq!(visible_at(&m, &history, center, t, &LatencyModel::default()), 0.0);
    }

    #[test]
    fn step_eye_movement_respects_latency() {
        let m = circular_mask(10.0);
        // 1 s of fixation at center, then an instantaneous 20° eye step
        let mut history = hold(AngularPos::CENTER, AngularPos::CENTER, 90);
        let t0 = 1.0;
        for k in 0..40 {
            history.push(GazeSample {
                t: t0 + k as f64 / SAMPLE_RATE_HZ,
                head_azimuth: 0.0,
                head_elevation: 0.0,
                eye_azimuth: 20.0,
                eye_elevation: 0.0,
                valid: true,
            });
        }
        let new_center = AngularPos::new(20.0, 0.0);
        let lat = LatencyModel::default();
        // 10 ms after the step the mask is still centered on the old gaze
        let a = visible_at(&m, &history, new_center, t0 + 0.01, &lat);
        assert_eq!(a, 1.0);
        // 200 ms later the latency has elapsed
        let a = visible_at(&m, &history, new_center, t0 + 0.2, &lat);
        assert_eq!(a, 0.0);
    }

    #[test]
    fn startup_uses_earliest_sample() {
        let m = circular_mask(10.0);
        let history = hold(AngularPos::new(5.0, 0.0), AngularPos::CENTER, 3);
        let a = visible_at(
            &m,
            &history,
            AngularPos::new(5.0, 0.0),
            0.0,
            &LatencyModel::default(),
        );
        assert_eq!(a, 0.0);
    }

    #[test]
    fn pgm_export_shape() {
        let m = MaskRaster::build(FieldBoundary::circular(5.0).unwrap(), 2.0, 2.0).unwrap();
        let mut buf = Vec::new();
        m.write_pgm(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("P2"));
        assert_eq!(lines.next(), Some("51 51"));
        assert_eq!(lines.next(), Some("255"));
        assert_eq!(text.lines().count(), 3 + 51);
    }
}
