//! Task-specific behavior built on top of the gaze controller.
//!
//! The standard adaptive participant model: pursuit memory with diffusion
//! for tracking, serpentine scanning with interrupt-on-sighting for
//! search, and remembered-obstacle avoidance for navigation. Fixation
//! agents stare at the center; omniscient agents run the same machinery
//! on unmasked percepts.

use crate::agents::{boustrophedon_path, AgentConfig, GazeCommand, GazeController, Policy};
use crate::error::Error;
use crate::geometry::{angular_distance, AngularPos};
use crate::model::TargetClass;
use crate::tasks::navigation::{
    NavCommand, NavPercept, NavigationAgent, NavigationConfig, ObstacleCategory, VisibleObstacle,
    CORRIDOR_WIDTH,
};
use crate::tasks::search::{SearchAgent, SearchConfig, SearchPercept};
use crate::tasks::tracking::{TrackingAgent, TrackingConfig, TrackingPercept, TrackingPhase};
use crate::tasks::{angular, dist, Vec2};
use crate::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

const LOST_SIGMA: f64 = 20.0;

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

// ---------------------------------------------------------------------------
// tracking

#[derive(Debug, Clone, Copy)]
struct Track {
    pos: Vec2,
    sigma: f64,
}

/// Pursuit memory agent: cycles fixation among remembered marked targets;
/// positional memory diffuses while a target is outside the field. At the
/// stop signal it re-identifies targets by maximum-likelihood assignment
/// (nearest candidate to each remembered position), falling back to
/// uniform random picks for lost tracks.
pub struct PursuitAgent {
    dwell: f64,
    decay: f64,
    rng: ChaCha8Rng,
    tracks: BTreeMap<u32, Track>,
    known: BTreeSet<u32>,
    focus: Option<u32>,
    focus_since: f64,
    sel_started: Option<f64>,
    sel_queue: Vec<u32>,
    last_pick_t: f64,
    dt: f64,
}

impl PursuitAgent {
    pub fn new(cfg: &AgentConfig, seed: u64) -> Self {
        PursuitAgent {
            dwell: cfg.fixation_dwell,
            decay: cfg.memory_decay,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x7261636b73),
            tracks: BTreeMap::new(),
            known: BTreeSet::new(),
            focus: None,
            focus_since: 0.0,
            sel_started: None,
            sel_queue: Vec::new(),
            last_pick_t: f64::NEG_INFINITY,
            dt: 1.0 / crate::model::SAMPLE_RATE_HZ,
        }
    }

    fn next_focus(&self, current: Option<u32>) -> Option<u32> {
        let keys: Vec<u32> = self.tracks.keys().cloned().collect();
        if keys.is_empty() {
            return None;
        }
        match current {
            None => Some(keys[0]),
            Some(c) => {
                let idx = keys.iter().position(|&k| k == c).unwrap_or(0);
                Some(keys[(idx + 1) % keys.len()])
            }
        }
    }

    fn random_unpicked(&mut self, picked: &[u32]) -> Option<u32> {
        let pool: Vec<u32> = self
            .known
            .iter()
            .cloned()
            .filter(|id| !picked.contains(id))
            .collect();
        if pool.is_empty() {
            None
        } else {
            Some(pool[self.rng.gen_range(0..pool.len())])
        }
    }
}

impl TrackingAgent for PursuitAgent {
    fn tick(&mut self, percept: &TrackingPercept, gaze: &mut GazeController) -> Option<u32> {
        for v in percept.visible {
            self.known.insert(v.id);
        }
        match percept.phase {
            TrackingPhase::Motion => {
                let visible_ids: BTreeSet<u32> = percept.visible.iter().map(|v| v.id).collect();
                for v in percept.visible {
                    if v.class == Some(TargetClass::Marked) {
                        self.tracks.insert(
                            v.id,
                            Track {
                                pos: v.pos,
                                sigma: 0.0,
                            },
                        );
                    }
                }
                // memory diffusion for tracks currently out of the field
                let decay = self.decay;
                let dt = self.dt;
                let mut noise = Vec::new();
                for (&id, track) in self.tracks.iter() {
                    if !visible_ids.contains(&id) && track.sigma < LOST_SIGMA {
                        noise.push(id);
                    }
                }
                for id in noise {
                    let (dx, dy) = (gaussian(&mut self.rng), gaussian(&mut self.rng));
                    let track = self.tracks.get_mut(&id).unwrap();
                    if decay.is_infinite() {
                        track.sigma = LOST_SIGMA;
                    } else if decay > 0.0 {
                        let step = decay * dt.sqrt();
                        track.pos[0] += dx * step;
                        track.pos[1] += dy * step;
                        track.sigma = (track.sigma * track.sigma + decay * decay * dt).sqrt();
                    }
                }
                // fixation cycling among remembered marks
                if !gaze.is_saccading(percept.t)
                    && (self.focus.is_none() || percept.t - self.focus_since >= self.dwell)
                {
                    if let Some(next) = self.next_focus(self.focus) {
                        self.focus = Some(next);
                        self.focus_since = percept.t;
                        let pos = self.tracks[&next].pos;
                        gaze.command(percept.t, GazeCommand { target: angular(pos) });
                    }
                }
                None
            }
            TrackingPhase::Selection => {
                if self.sel_started.is_none() {
                    self.sel_started = Some(percept.t);
                    self.sel_queue = self.tracks.keys().cloned().collect();
                    self.focus = None;
                }
                if gaze.is_saccading(percept.t) || percept.t - self.last_pick_t < 0.3 {
                    return None;
                }
                // work through remembered tracks, then random fallback
                while let Some(&track_id) = self.sel_queue.first() {
                    let track = self.tracks[&track_id];
                    if track.sigma >= LOST_SIGMA {
                        self.sel_queue.remove(0);
                        self.last_pick_t = percept.t;
                        return self.random_unpicked(percept.picked);
                    }
                    // look at the remembered position first
                    if angular_distance(percept.gaze, angular(track.pos)) > 2.5 {
                        gaze.command(
                            percept.t,
                            GazeCommand {
                                target: angular(track.pos),
                            },
                        );
                        return None;
                    }
                    self.sel_queue.remove(0);
                    let nearest = percept
                        .visible
                        .iter()
                        .filter(|v| !percept.picked.contains(&v.id))
                        .min_by(|a, b| {
                            dist(a.pos, track.pos).total_cmp(&dist(b.pos, track.pos))
                        })
                        .map(|v| v.id);
                    self.last_pick_t = percept.t;
                    return nearest.or_else(|| self.random_unpicked(percept.picked));
                }
                // wrong guesses used up the queue: keep picking at random
                if percept.marked_remaining > 0 {
                    self.last_pick_t = percept.t;
                    return self.random_unpicked(percept.picked);
                }
                None
            }
        }
    }
}

/// Stares at the center and never selects.
pub struct FixationTracking {
    commanded: bool,
}

impl TrackingAgent for FixationTracking {
    fn tick(&mut self, percept: &TrackingPercept, gaze: &mut GazeController) -> Option<u32> {
        if !self.commanded {
            gaze.command(
                percept.t,
                GazeCommand {
                    target: AngularPos::CENTER,
                },
            );
            self.commanded = true;
        }
        None
    }
}

pub fn tracking_agent(
    agent_cfg: &AgentConfig,
    cfg: &TrackingConfig,
) -> Result<Box<dyn TrackingAgent>> {
    let seed = agent_cfg.seed ^ cfg.seed.rotate_left(7);
    match agent_cfg.policy {
        Policy::Pursuit | Policy::Boustrophedon | Policy::NavWalker => {
            Ok(Box::new(PursuitAgent::new(agent_cfg, seed)))
        }
        Policy::Omniscient => {
            // unmasked percepts + perfect memory
            let perfect = AgentConfig {
                memory_decay: 0.0,
                ..*agent_cfg
            };
            Ok(Box::new(PursuitAgent::new(&perfect, seed)))
        }
        Policy::Fixation => Ok(Box::new(FixationTracking { commanded: false })),
        Policy::Replay => Err(Error::config(
            "replay policy needs a recorded trace; it cannot drive a live trial",
        )),
    }
}

// ---------------------------------------------------------------------------
// search

/// Serpentine scanner: hops along boustrophedon rows sized to the field
/// radius, interrupts to fixate any marked target it perceives (after the
/// reaction delay), and lets the runner's dwell rule do the selecting.
pub struct ScanAgent {
    waypoints: Vec<Vec2>,
    idx: usize,
    hop: f64,
    dwell: f64,
    reaction_delay: f64,
    cursor: Vec2,
    arrived_at: f64,
    approach: Option<u32>,
    sighting: Option<(u32, f64)>,
}

impl ScanAgent {
    pub fn new(cfg: &AgentConfig, search: &SearchConfig, field_radius: f64) -> Self {
        let spacing = (1.6 * field_radius).clamp(4.0, 24.0);
        let waypoints = boustrophedon_path(search.area_w, search.area_h, spacing);
        ScanAgent {
            cursor: waypoints[0],
            waypoints,
            idx: 0,
            hop: spacing,
            dwell: cfg.fixation_dwell.min(0.3),
            reaction_delay: cfg.reaction_delay,
            arrived_at: 0.0,
            approach: None,
            sighting: None,
        }
    }
}

impl SearchAgent for ScanAgent {
    fn tick(&mut self, percept: &SearchPercept, gaze: &mut GazeController) {
        // drop the approach once its target disappears (got selected)
        if let Some(id) = self.approach {
            if !percept.visible.iter().any(|v| v.id == id) {
                self.approach = None;
            }
        }
        if let Some(id) = self.approach {
            if !gaze.is_saccading(percept.t) {
                let target = percept.visible.iter().find(|v| v.id == id).unwrap();
                if angular_distance(percept.gaze, angular(target.pos)) > 0.7 {
                    gaze.command(
                        percept.t,
                        GazeCommand {
                            target: angular(target.pos),
                        },
                    );
                }
            }
            return;
        }
        // react to marked sightings with the configured delay
        let marked = percept
            .visible
            .iter()
            .find(|v| v.class == Some(TargetClass::Marked));
        match (self.sighting, marked) {
            (None, Some(m)) => self.sighting = Some((m.id, percept.t)),
            (Some((id, _)), _) if !percept.visible.iter().any(|v| v.id == id) => {
                self.sighting = None
            }
            _ => {}
        }
        if let Some((id, seen_t)) = self.sighting {
            if percept.t - seen_t >= self.reaction_delay {
                self.approach = Some(id);
                self.sighting = None;
                return;
            }
        }
        // serpentine scan hops
        if gaze.is_saccading(percept.t) || percept.t - self.arrived_at < self.dwell {
            return;
        }
        let wp = self.waypoints[self.idx];
        let d = dist(self.cursor, wp);
        if d < 0.5 {
            self.idx = (self.idx + 1) % self.waypoints.len();
            return;
        }
        let step = self.hop.min(d);
        self.cursor = [
            self.cursor[0] + (wp[0] - self.cursor[0]) / d * step,
            self.cursor[1] + (wp[1] - self.cursor[1]) / d * step,
        ];
        gaze.command(
            percept.t,
            GazeCommand {
                target: angular(self.cursor),
            },
        );
        self.arrived_at = percept.t;
    }
}

/// Holds the center for the whole trial.
pub struct FixationSearch {
    commanded: bool,
}

impl SearchAgent for FixationSearch {
    fn tick(&mut self, percept: &SearchPercept, gaze: &mut GazeController) {
        if !self.commanded {
            gaze.command(
                percept.t,
                GazeCommand {
                    target: AngularPos::CENTER,
                },
            );
            self.commanded = true;
        }
    }
}

pub fn search_agent(
    agent_cfg: &AgentConfig,
    cfg: &SearchConfig,
    field_radius: f64,
) -> Result<Box<dyn SearchAgent>> {
    match agent_cfg.policy {
        Policy::Pursuit | Policy::Boustrophedon | Policy::NavWalker => {
            Ok(Box::new(ScanAgent::new(agent_cfg, cfg, field_radius)))
        }
        Policy::Omniscient => Ok(Box::new(ScanAgent::new(agent_cfg, cfg, 60.0))),
        Policy::Fixation => Ok(Box::new(FixationSearch { commanded: false })),
        Policy::Replay => Err(Error::config(
            "replay policy needs a recorded trace; it cannot drive a live trial",
        )),
    }
}

// ---------------------------------------------------------------------------
// navigation

/// Obstacle-avoiding walker: remembers every obstacle it has perceived,
/// steers through the widest remembered gap ahead, slows near remembered
/// obstacles, and scans a forward cone with its gaze.
pub struct NavWalkerAgent {
    memory: BTreeMap<u32, VisibleObstacle>,
    scan: Vec<[f64; 2]>,
    scan_idx: usize,
    scan_since: f64,
    dwell: f64,
    fixate_center: bool,
}

impl NavWalkerAgent {
    pub fn new(cfg: &AgentConfig, fixate_center: bool) -> Self {
        NavWalkerAgent {
            memory: BTreeMap::new(),
            scan: vec![
                [0.0, -8.0],
                [-18.0, -18.0],
                [18.0, -18.0],
                [0.0, 10.0],
                [-18.0, 0.0],
                [18.0, 0.0],
            ],
            scan_idx: 0,
            scan_since: 0.0,
            dwell: cfg.fixation_dwell.min(0.35),
            fixate_center: fixate_center,
        }
    }

    /// Free lateral intervals within the walkable band after removing the
    /// remembered obstacles in the lookahead window.
    fn desired_lat(&self, avatar_s: f64, avatar_lat: f64) -> f64 {
        let band = CORRIDOR_WIDTH / 2.0 - 0.7;
        let mut blocked: Vec<(f64, f64)> = Vec::new();
        for ob in self.memory.values() {
            let ds = ob.s - avatar_s;
            if !(0.0..7.0).contains(&ds) {
                continue;
            }
            let pad = ob.half_lat_extent + 0.55;
            match ob.category {
                // a remembered mover sweeps the corridor; avoidance is
                //.handled by slowing down, not by lateral planning
                ObstacleCategory::Moving => continue,
                _ => blocked.push((ob.lat - pad, ob.lat + pad)),
            }
        }
        if blocked.is_empty() {
            return avatar_lat.clamp(-band, band);
        }
        blocked.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut free: Vec<(f64, f64)> = Vec::new();
        let mut cursor = -band;
        for (lo, hi) in blocked {
            if lo > cursor {
                free.push((cursor, lo.min(band)));
            }
            cursor = cursor.max(hi);
        }
        if cursor < band {
            free.push((cursor, band));
        }
        free.retain(|(lo, hi)| hi - lo >= 0.55);
        if free.is_empty() {
            return avatar_lat.clamp(-band, band);
        }
        // nearest free interval; keep inside it with margin
        let (lo, hi) = *free
            .iter()
            .min_by(|a, b| {
                let da = if avatar_lat < a.0 {
                    a.0 - avatar_lat
                } else if avatar_lat > a.1 {
                    avatar_lat - a.1
                } else {
                    0.0
                };
                let db = if avatar_lat < b.0 {
                    b.0 - avatar_lat
                } else if avatar_lat > b.1 {
                    avatar_lat - b.1
                } else {
                    0.0
                };
                da.total_cmp(&db)
            })
            .unwrap();
        avatar_lat.clamp(lo + 0.25, hi - 0.25).clamp(lo, hi)
    }
}

impl NavigationAgent for NavWalkerAgent {
    fn tick(&mut self, percept: &NavPercept, gaze: &mut GazeController) -> NavCommand {
        for v in percept.visible {
            self.memory.insert(v.id, *v);
        }
        let s = percept.avatar.s;
        self.memory.retain(|_, ob| ob.s > s - 1.0);

        // gaze: scan the forward cone
        if !gaze.is_saccading(percept.t) && percept.t - self.scan_since >= self.dwell {
            let (az, el) = if self.fixate_center {
                (0.0, 0.0)
            } else {
                let p = self.scan[self.scan_idx];
                self.scan_idx = (self.scan_idx + 1) % self.scan.len();
                (p[0], p[1])
            };
            gaze.command(
                percept.t,
                GazeCommand {
                    target: AngularPos::new(percept.base_heading + az, el),
                },
            );
            self.scan_since = percept.t;
        }

        // steering
        let desired = self.desired_lat(s, percept.avatar.lat);
        let lookahead = 3.0;
        let rel_heading = (-(desired - percept.avatar.lat)).atan2(lookahead).to_degrees();

        // slow down near remembered obstacles ahead of the planned line
        let mut speed = percept.max_speed;
        for ob in self.memory.values() {
            let ds = ob.s - s;
            if !(0.0..3.0).contains(&ds) {
                continue;
            }
            let close_laterally = match ob.category {
                ObstacleCategory::Moving => true,
                _ => (ob.lat - percept.avatar.lat).abs() < ob.half_lat_extent + 0.9,
            };
            if close_laterally {
                speed = speed.min(percept.max_speed * 0.45);
            }
        }
        NavCommand { rel_heading, speed }
    }
}

pub fn navigation_agent(
    agent_cfg: &AgentConfig,
    _cfg: &NavigationConfig,
) -> Result<Box<dyn NavigationAgent>> {
    match agent_cfg.policy {
        Policy::Pursuit | Policy::Boustrophedon | Policy::NavWalker | Policy::Omniscient => {
            Ok(Box::new(NavWalkerAgent::new(agent_cfg, false)))
        }
        Policy::Fixation => Ok(Box::new(NavWalkerAgent::new(agent_cfg, true))),
        Policy::Replay => Err(Error::config(
            "replay policy needs a recorded trace; it cannot drive a live trial",
        )),
    }
}

/// A recorded gaze trace replayed bit-exactly.
pub struct ReplayTrace {
    samples: Vec<crate::model::GazeSample>,
}

impl ReplayTrace {
    pub fn new(samples: Vec<crate::model::GazeSample>) -> Self {
        ReplayTrace { samples }
    }

    pub fn samples(&self) -> &[crate::model::GazeSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<crate::model::GazeSample> {
        self.samples
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GazeSample;

    #[test]
    fn replay_reproduces_trace_bit_exactly() {
        let trace: Vec<GazeSample> = (0..200)
            .map(|k| GazeSample {
                t: k as f64 / 90.0,
                head_azimuth: (k as f64 * 0.31).sin() * 12.0,
                head_elevation: (k as f64 * 0.17).cos() * 4.0,
                eye_azimuth: (k as f64 * 0.73).sin() * 20.0,
                eye_elevation: (k as f64 * 0.41).cos() * 9.0,
                valid: k % 37 != 0,
            })
            .collect();
        let replay = ReplayTrace::new(trace.clone());
        assert_eq!(replay.samples(), trace.as_slice());
        assert_eq!(replay.into_samples(), trace);
    }

    #[test]
    fn replay_cannot_drive_live_trials() {
        let cfg = AgentConfig {
            policy: Policy::Replay,
            ..AgentConfig::default()
        };
        assert!(tracking_agent(&cfg, &TrackingConfig::default()).is_err());
        assert!(search_agent(&cfg, &SearchConfig::default(), 10.0).is_err());
        assert!(navigation_agent(&cfg, &NavigationConfig::default()).is_err());
    }
}
