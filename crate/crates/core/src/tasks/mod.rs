//! The three visual-task environments. Each trial is a deterministic,
//! single-threaded closed-loop simulation of (config, agent, field);
//! batches of trials fan out through [`crate::exec`].

pub mod navigation;
pub mod search;
pub mod tracking;

use crate::geometry::AngularPos;
use crate::mask::{visible_at, LatencyModel, MaskRaster};
use crate::model::{GazeSample, TargetClass};

/// Planar position in play-area degrees (x right, y up). Play areas are
/// treated as flat boards of visual angle, matching how the task geometry
/// is specified; conversion to world directions happens at the perception
/// boundary.
pub type Vec2 = [f64; 2];

pub fn dist(a: Vec2, b: Vec2) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub fn angular(p: Vec2) -> AngularPos {
    AngularPos::new(p[0], p[1])
}

/// One target as the agent perceives it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibleTarget {
    pub id: u32,
    pub pos: Vec2,
    /// Marked-indicator state: `Some(class)` while indicators are shown,
    /// `None` in the tracking selection phase where targets look identical.
    pub class: Option<TargetClass>,
    pub alpha: f64,
}

/// Perception gate shared by the task runners: an object is delivered to
/// the agent iff the mask alpha at its position (under the latency model)
/// is below 0.5. Omniscient agents bypass the mask entirely.
pub struct PerceptionGate<'a> {
    pub mask: &'a MaskRaster,
    pub latency: &'a LatencyModel,
    pub omniscient: bool,
}

impl<'a> PerceptionGate<'a> {
    pub fn alpha(&self, history: &[GazeSample], point: AngularPos, t: f64) -> f64 {
        if self.omniscient {
            0.0
        } else {
            visible_at(self.mask, history, point, t, self.latency)
        }
    }

    pub fn filter_targets(
        &self,
        history: &[GazeSample],
        t: f64,
        items: impl Iterator<Item = (u32, Vec2, Option<TargetClass>)>,
    ) -> Vec<VisibleTarget> {
        let mut out = Vec::new();
        for (id, pos, class) in items {
            let alpha = self.alpha(history, angular(pos), t);
            if alpha < 0.5 {
                out.push(VisibleTarget {
                    id,
                    pos,
                    class,
                    alpha,
                });
            }
        }
        out
    }
}

/// Difficulty scaling shared by tracking and search: each level adds 4% of
/// the base value, with the play area capped at 80° x 60°.
pub fn level_scale(level: u32) -> f64 {
    1.0 + 0.04 * (level.saturating_sub(1)) as f64
}

pub fn scaled_area(level: u32, base_w: f64, base_h: f64, cap_w: f64, cap_h: f64) -> (f64, f64) {
    let s = level_scale(level);
    ((base_w * s).min(cap_w), (base_h * s).min(cap_h))
}
