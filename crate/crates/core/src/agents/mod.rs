//! Synthetic gaze-and-behavior policies. Agents perceive the world only
//! through the visual-field mask (the task runners build their percepts)
//! and emit gaze commands, selections and locomotion.
//!
//! The `policy` field selects the overall behavior suite. `Pursuit`,
//! `Boustrophedon` and `NavWalker` all denote the standard adaptive
//! participant model (each name emphasizing the task it was designed for:
//! pursuit memory in tracking, serpentine scanning in search, obstacle
//! avoidance walking in navigation). `Omniscient` receives unmasked
//! percepts in every task, `Fixation` never moves its gaze, and `Replay`
//! reproduces a recorded trace bit-exactly.

pub mod gaze;
pub mod policies;

pub use gaze::{GazeCommand, GazeController, GazeSplit};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Fixation,
    Boustrophedon,
    Pursuit,
    NavWalker,
    Omniscient,
    Replay,
}

impl Policy {
    /// Whether this policy reads unmasked world state.
    pub fn is_omniscient(&self) -> bool {
        matches!(self, Policy::Omniscient)
    }
}

/// Parameters of a synthetic participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub policy: Policy,
    /// Delay between a perceptual event and the reaction to it, seconds.
    pub reaction_delay: f64,
    /// Fixation hold before moving on, seconds.
    pub fixation_dwell: f64,
    /// Eye-in-head clamp (device tracking range), degrees.
    pub eye_range: f64,
    /// Main-sequence saccade duration: `base + per_deg * amplitude`.
    pub saccade_duration_base: f64,
    pub saccade_duration_per_deg: f64,
    /// Positional memory drift while a target is outside the field,
    /// degrees per sqrt(second). 0 = perfect memory; infinite = memoryless.
    pub memory_decay: f64,
    /// Fixational jitter expressed as gaze velocity noise, degrees/second.
    pub fixation_jitter: f64,
    /// Per-sample probability of an invalid eye-tracking frame.
    pub invalid_rate: f64,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            policy: Policy::Pursuit,
            reaction_delay: 0.1,
            fixation_dwell: 0.4,
            eye_range: 25.0,
            saccade_duration_base: 0.020,
            saccade_duration_per_deg: 0.002,
            memory_decay: 2.0,
            fixation_jitter: 2.0,
            invalid_rate: 0.002,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.eye_range <= 0.0 {
            return Err(crate::Error::config("agent eye_range must be positive"));
        }
        if self.reaction_delay < 0.0 || self.fixation_dwell < 0.0 {
            return Err(crate::Error::config("agent delays must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.invalid_rate) {
            return Err(crate::Error::config("invalid_rate must be in [0,1]"));
        }
        Ok(())
    }
}

/// Serpentine scan waypoints covering an `area_w` x `area_h` degree area.
///
/// Rows run edge to edge, alternating left-to-right and right-to-left from
/// top to bottom. When `row_spacing` divides the height the rows are
/// exactly `row_spacing` apart; otherwise the spacing shrinks to pin the
/// first and last rows to the area edges. A spacing at or above the height
/// collapses to a single central row.
pub fn boustrophedon_path(area_w: f64, area_h: f64, row_spacing: f64) -> Vec<[f64; 2]> {
    assert!(row_spacing > 0.0, "row_spacing must be positive");
    let half_w = area_w / 2.0;
    let half_h = area_h / 2.0;
    let rows: Vec<f64> = if row_spacing >= area_h {
        vec![0.0]
    } else {
        let n = (area_h / row_spacing).ceil() as usize + 1;
        (0..n)
            .map(|i| half_h - area_h * i as f64 / (n - 1) as f64)
            .collect()
    };
    let mut waypoints = Vec::with_capacity(rows.len() * 2);
    for (i, &y) in rows.iter().enumerate() {
        if i % 2 == 0 {
            waypoints.push([-half_w, y]);
            waypoints.push([half_w, y]);
        } else {
            waypoints.push([half_w, y]);
            waypoints.push([-half_w, y]);
        }
    }
    waypoints
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_rows_for_base_area_and_13_spacing() {
        let wp = boustrophedon_path(52.0, 39.0, 13.0);
        let rows: Vec<f64> = wp.iter().step_by(2).map(|p| p[1]).collect();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows, vec![19.5, 6.5, -6.5, -19.5]);
        // serpentine: consecutive rows start on alternating sides
        assert_eq!(wp[0][0], -26.0);
        assert_eq!(wp[2][0], 26.0);
        assert_eq!(wp[4][0], -26.0);
    }

    #[test]
    fn spacing_at_or_above_height_gives_single_row() {
        assert_eq!(boustrophedon_path(52.0, 39.0, 39.0).len(), 2);
        assert_eq!(boustrophedon_path(52.0, 39.0, 60.0), vec![[-26.0, 0.0], [26.0, 0.0]]);
    }

    #[test]
    fn disc_union_along_path_covers_area() {
        // coverage oracle: rasterize the swept path at spacing = 1.6 * r
        let r: f64 = 8.0;
        let (w, h) = (52.0, 39.0);
        let wp = boustrophedon_path(w, h, 1.6 * r);
        let cell = 0.5;
        let (nx, ny) = ((w / cell) as usize, (h / cell) as usize);
        let mut covered = vec![false; nx * ny];
        // walk the polyline densely, marking discs
        for pair in wp.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let steps = (len / 0.25).ceil() as usize + 1;
            for s in 0..=steps {
                let f = s as f64 / steps as f64;
                let (px, py) = (a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]));
                for iy in 0..ny {
                    let cy = -h / 2.0 + (iy as f64 + 0.5) * cell;
                    if (cy - py).abs() > r {
                        continue;
                    }
                    for ix in 0..nx {
                        let cx = -w / 2.0 + (ix as f64 + 0.5) * cell;
                        if (cx - px).powi(2) + (cy - py).powi(2) <= r * r {
                            covered[iy * nx + ix] = true;
                        }
                    }
                }
            }
        }
        let frac = covered.iter().filter(|&&c| c).count() as f64 / (nx * ny) as f64;
        assert!(frac >= 0.99, "coverage {frac}");
    }
}
