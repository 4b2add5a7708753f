//! Procedural corridor navigation: six tiles (two straight, two left,
//! two right corners in random order), twelve obstacles, capsule
//! collision counting and timing.
//!
//! The simulation runs in the unrolled corridor frame: `s` is distance
//! along the centerline, `lat` the lateral offset (positive left), and
//! obstacle footprints are defined in this frame. The tile layout drives
//! the world heading schedule, so corners still show up in the gaze trace
//! as head rotations.

use crate::agents::{policies, AgentConfig, GazeController};
use crate::error::Error;
use crate::geometry::AngularPos;
use crate::mask::{LatencyModel, MaskRaster};
use crate::model::{
    quantize, EventKind, Outcome, TaskKind, TrialEvent, TrialRecord, SAMPLE_RATE_HZ,
    SCHEMA_VERSION,
};
use crate::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const CORRIDOR_WIDTH: f64 = 8.0;
pub const COURSE_LENGTH: f64 = 56.0;
pub const TILE_COUNT: usize = 6;
pub const TILE_LENGTH: f64 = COURSE_LENGTH / TILE_COUNT as f64;
pub const CAPSULE_DIAMETER: f64 = 0.4;
pub const OBSTACLE_COUNT: usize = 12;

/// Wall ids in collision events.
pub const WALL_LEFT: u32 = 1000;
pub const WALL_RIGHT: u32 = 1001;
pub const WALL_START: u32 = 1002;
pub const WALL_END: u32 = 1003;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tile {
    Straight,
    Left,
    Right,
}

/// One of the 90 distinct orderings of {2x Straight, 2x Left, 2x Right}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CourseLayout {
    pub tiles: [Tile; TILE_COUNT],
}

impl CourseLayout {
    /// Uniform draw over the 90 layouts: a Fisher-Yates shuffle of the six
    /// (distinguishable) tiles maps 720 equally likely orderings onto the
    /// 90 distinct sequences, 8 apiece.
    pub fn generate(rng: &mut ChaCha8Rng) -> Self {
        let mut tiles = [
            Tile::Straight,
            Tile::Straight,
            Tile::Left,
            Tile::Left,
            Tile::Right,
            Tile::Right,
        ];
        tiles.shuffle(rng);
        CourseLayout { tiles }
    }

    /// Enumerates all distinct layouts in lexicographic order.
    pub fn enumerate_all() -> Vec<CourseLayout> {
        let mut out = Vec::new();
        let mut tiles = [Tile::Straight; TILE_COUNT];
        fn rec(
            tiles: &mut [Tile; TILE_COUNT],
            idx: usize,
            counts: &mut [u8; 3],
            out: &mut Vec<CourseLayout>,
        ) {
            if idx == TILE_COUNT {
                out.push(CourseLayout { tiles: *tiles });
                return;
            }
            for (k, tile) in [Tile::Straight, Tile::Left, Tile::Right].iter().enumerate() {
                if counts[k] < 2 {
                    counts[k] += 1;
                    tiles[idx] = *tile;
                    rec(tiles, idx + 1, counts, out);
                    counts[k] -= 1;
                }
            }
        }
        rec(&mut tiles, 0, &mut [0; 3], &mut out);
        out
    }

    /// Canonical index of this layout within [`enumerate_all`].
    pub fn index(&self) -> usize {
        Self::enumerate_all()
            .iter()
            .position(|l| l == self)
            .expect("layout is one of the 90")
    }
}

/// World embedding of a tile sequence: heading after each corner, with the
/// turn smoothed over 2 m around the tile-center elbow.
#[derive(Debug, Clone, PartialEq)]
pub struct CourseGeometry {
    pub tiles: Vec<Tile>,
    /// (elbow s, heading before, heading after), degrees.
    turns: Vec<(f64, f64, f64)>,
    pub length: f64,
}

impl CourseGeometry {
    pub fn from_tiles(tiles: &[Tile]) -> Self {
        let mut turns = Vec::new();
        let mut heading = 0.0f64;
        for (k, tile) in tiles.iter().enumerate() {
            let delta = match tile {
                Tile::Straight => 0.0,
                Tile::Left => 90.0,
                Tile::Right => -90.0,
            };
            if delta != 0.0 {
                let elbow = k as f64 * TILE_LENGTH + TILE_LENGTH / 2.0;
                turns.push((elbow, heading, heading + delta));
                heading += delta;
            }
        }
        CourseGeometry {
            tiles: tiles.to_vec(),
            turns,
            length: tiles.len() as f64 * TILE_LENGTH,
        }
    }

    /// World heading of the corridor axis at centerline position `s`.
    pub fn base_heading(&self, s: f64) -> f64 {
        let mut heading = 0.0;
        for &(elbow, before, after) in &self.turns {
            if s <= elbow - 1.0 {
                return heading;
            }
            if s < elbow + 1.0 {
                let f = (s - (elbow - 1.0)) / 2.0;
                return before + f * (after - before);
            }
            heading = after;
        }
        heading
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleCategory {
    Wall,
    NearGround,
    Ceiling,
    Moving,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Footprint {
    /// Axis-aligned box in the corridor frame.
    Rect { half_depth: f64, half_width: f64 },
    Circle { radius: f64 },
}

impl Footprint {
    pub fn half_lat_extent(&self) -> f64 {
        match self {
            Footprint::Rect { half_width, .. } => *half_width,
            Footprint::Circle { radius } => *radius,
        }
    }
}

/// Lateral oscillation of a moving obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: u32,
    pub category: ObstacleCategory,
    pub footprint: Footprint,
    /// Station along the centerline, meters.
    pub s: f64,
    /// Resting lateral offset, meters (positive left).
    pub lat: f64,
    pub motion: Option<Oscillation>,
}

impl Obstacle {
    /// Lateral center at time `t`.
    pub fn lat_at(&self, t: f64) -> f64 {
        match self.motion {
            None => self.lat,
            Some(o) => o.amplitude * (std::f64::consts::TAU * t / o.period + o.phase).sin(),
        }
    }

    /// Eye-height offset used for the perceived elevation angle;
    /// categories differ in where they pull the gaze, not in collision.
    pub fn height_offset(&self) -> f64 {
        match self.category {
            ObstacleCategory::Wall => 0.0,
            ObstacleCategory::NearGround => -1.2,
            ObstacleCategory::Ceiling => 0.9,
            ObstacleCategory::Moving => -0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSet {
    pub obstacles: Vec<Obstacle>,
}

/// A generated course: layout, world embedding, obstacles.
#[derive(Debug, Clone, PartialEq)]
pub struct Course {
    pub layout: CourseLayout,
    pub geometry: CourseGeometry,
    pub obstacles: ObstacleSet,
}

/// The 16-template obstacle pool; a course samples 12 distinct entries.
/// Returns (category, footprint, lateral rule). Lateral rule: `None`
/// means side-mounted (wall/ceiling), `Some(range)` a uniform offset.
fn obstacle_pool() -> Vec<(ObstacleCategory, Footprint)> {
    use Footprint::*;
    use ObstacleCategory::*;
    vec![
        (Wall, Rect { half_depth: 0.2, half_width: 2.4 }),
        (Wall, Rect { half_depth: 0.2, half_width: 2.6 }),
        (Wall, Rect { half_depth: 0.2, half_width: 2.8 }),
        (Wall, Rect { half_depth: 0.2, half_width: 3.0 }),
        (NearGround, Circle { radius: 0.5 }),
        (NearGround, Circle { radius: 0.7 }),
        (NearGround, Rect { half_depth: 0.6, half_width: 0.6 }),
        (NearGround, Rect { half_depth: 0.4, half_width: 0.8 }),
        (Ceiling, Rect { half_depth: 0.15, half_width: 1.75 }),
        (Ceiling, Rect { half_depth: 0.15, half_width: 2.0 }),
        (Ceiling, Rect { half_depth: 0.15, half_width: 2.25 }),
        (Ceiling, Rect { half_depth: 0.15, half_width: 2.5 }),
        (Moving, Circle { radius: 0.4 }),
        (Moving, Circle { radius: 0.5 }),
        (Moving, Rect { half_depth: 0.2, half_width: 0.4 }),
        (Moving, Rect { half_depth: 0.3, half_width: 0.5 }),
    ]
}

/// Generates a randomized course: uniform layout, 12 distinct obstacles
/// from the 16-template pool, placed so a clear route of width at least
/// capsule diameter + margin always exists (moving obstacles sweep the
/// corridor and are excluded from the static clearance rule).
pub fn generate_course(seed: u64) -> Course {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = CourseLayout::generate(&mut rng);
    let geometry = CourseGeometry::from_tiles(&layout.tiles);

    let pool = obstacle_pool();
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    indices.shuffle(&mut rng);
    indices.truncate(OBSTACLE_COUNT);

    let half_w = CORRIDOR_WIDTH / 2.0;
    let mut obstacles = Vec::with_capacity(OBSTACLE_COUNT);
    for (k, &pi) in indices.iter().enumerate() {
        let (category, footprint) = pool[pi];
        let s = 6.0 + 4.0 * k as f64 + rng.gen_range(-1.2..1.2);
        let side: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let (lat, motion) = match category {
            ObstacleCategory::Wall | ObstacleCategory::Ceiling => {
                (side * (half_w - footprint.half_lat_extent()), None)
            }
            ObstacleCategory::NearGround => (rng.gen_range(-2.2..2.2), None),
            ObstacleCategory::Moving => {
                let amplitude = half_w - footprint.half_lat_extent() - 0.1;
                (
                    0.0,
                    Some(Oscillation {
                        amplitude,
                        period: rng.gen_range(3.0..5.0),
                        phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    }),
                )
            }
        };
        obstacles.push(Obstacle {
            id: k as u32,
            category,
            footprint,
            s,
            lat,
            motion,
        });
    }
    Course {
        layout,
        geometry,
        obstacles: ObstacleSet { obstacles },
    }
}

/// Whether the avatar capsule footprint (circle radius 0.2 m at `(s,
/// lat)`) intersects the obstacle at time `t`.
pub fn circle_hits_obstacle(s: f64, lat: f64, radius: f64, ob: &Obstacle, t: f64) -> bool {
    let olat = ob.lat_at(t);
    match ob.footprint {
        Footprint::Circle { radius: r } => {
            let d2 = (s - ob.s).powi(2) + (lat - olat).powi(2);
            d2 < (radius + r).powi(2)
        }
        Footprint::Rect {
            half_depth,
            half_width,
        } => {
            let dx = (s - ob.s).abs() - half_depth;
            let dy = (lat - olat).abs() - half_width;
            let (cx, cy) = (dx.max(0.0), dy.max(0.0));
            cx * cx + cy * cy < radius * radius
        }
    }
}

/// Wall contacts for the capsule footprint, including the start wall and
/// the wall closing the goal chamber.
pub fn wall_contacts(s: f64, lat: f64, radius: f64, length: f64, goal_depth: f64) -> Vec<u32> {
    let half_w = CORRIDOR_WIDTH / 2.0;
    let mut out = Vec::new();
    if lat > half_w - radius {
        out.push(WALL_LEFT);
    }
    if lat < -(half_w - radius) {
        out.push(WALL_RIGHT);
    }
    if s < radius {
        out.push(WALL_START);
    }
    if s > length + goal_depth - radius {
        out.push(WALL_END);
    }
    out
}

/// All surfaces the capsule touches at `(s, lat)` at time `t`.
pub fn detect_contacts(
    s: f64,
    lat: f64,
    radius: f64,
    obstacles: &[Obstacle],
    length: f64,
    goal_depth: f64,
    t: f64,
) -> Vec<u32> {
    let mut out = wall_contacts(s, lat, radius, length, goal_depth);
    for ob in obstacles {
        if (ob.s - s).abs() < 4.0 && circle_hits_obstacle(s, lat, radius, ob, t) {
            out.push(ob.id);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavigationConfig {
    pub base_speed: f64,
    /// Per-level relative speed growth.
    pub speed_growth: f64,
    /// Time limit = course length / speed * factor * shrink^(level-1).
    pub time_limit_factor: f64,
    pub time_limit_shrink: f64,
    pub goal_depth: f64,
    pub seed: u64,
    pub level: u32,
    pub session: u32,
    pub trial: u32,
}

impl Default for NavigationConfig {
    fn default() -> Self {
        NavigationConfig {
            base_speed: 1.5,
            speed_growth: 0.03,
            time_limit_factor: 1.6,
            time_limit_shrink: 0.98,
            goal_depth: 4.0,
            seed: 0,
            level: 1,
            session: 1,
            trial: 1,
        }
    }
}

impl NavigationConfig {
    pub fn for_level(level: u32, seed: u64) -> Self {
        NavigationConfig {
            seed,
            level,
            ..NavigationConfig::default()
        }
    }

    pub fn max_speed(&self) -> f64 {
        self.base_speed * (1.0 + self.speed_growth * (self.level.saturating_sub(1)) as f64)
    }

    pub fn time_limit(&self, course_length: f64) -> f64 {
        course_length / self.max_speed()
            * self.time_limit_factor
            * self.time_limit_shrink.powi(self.level.saturating_sub(1) as i32)
    }
}

/// Avatar kinematic state in the corridor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvatarState {
    /// Centerline position, meters.
    pub s: f64,
    /// Lateral offset, meters, positive left.
    pub lat: f64,
    /// Heading relative to the corridor axis, degrees, positive right.
    pub rel_heading: f64,
    /// Walking speed, m/s (controller-driven scalar).
    pub speed: f64,
}

/// One obstacle as the agent perceives it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibleObstacle {
    pub id: u32,
    pub s: f64,
    pub lat: f64,
    pub category: ObstacleCategory,
    pub half_lat_extent: f64,
}

pub struct NavPercept<'a> {
    pub t: f64,
    pub avatar: AvatarState,
    pub base_heading: f64,
    pub max_speed: f64,
    pub goal_s: f64,
    pub visible: &'a [VisibleObstacle],
}

/// Desired heading (relative to corridor axis, degrees, positive right)
/// and walking speed for the next instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavCommand {
    pub rel_heading: f64,
    pub speed: f64,
}

pub trait NavigationAgent {
    fn tick(&mut self, percept: &NavPercept, gaze: &mut GazeController) -> NavCommand;
}

pub fn run_navigation_trial(
    cfg: &NavigationConfig,
    agent_cfg: &AgentConfig,
    mask: &MaskRaster,
    latency: &LatencyModel,
) -> Result<TrialRecord> {
    let course = generate_course(cfg.seed);
    let mut agent = policies::navigation_agent(agent_cfg, cfg)?;
    run_navigation_trial_on(
        cfg,
        agent_cfg,
        mask,
        latency,
        &course,
        agent.as_mut(),
        agent_cfg.policy.is_omniscient(),
    )
}

/// Runs a navigation trial on an explicit course (tests use hand-built
/// courses; the obstacle-free straight-line timing example needs one).
#[allow(clippy::too_many_arguments)]
pub fn run_navigation_trial_on(
    cfg: &NavigationConfig,
    agent_cfg: &AgentConfig,
    mask: &MaskRaster,
    latency: &LatencyModel,
    course: &Course,
    agent: &mut dyn NavigationAgent,
    omniscient: bool,
) -> Result<TrialRecord> {
    agent_cfg.validate()?;
    if cfg.base_speed <= 0.0 {
        return Err(Error::config("navigation: base speed must be positive"));
    }
    let mut gc = GazeController::new(
        agent_cfg,
        cfg.seed ^ agent_cfg.seed.rotate_left(41) ^ 0x0bad_cafe_dead_beef,
    );
    let gate = crate::tasks::PerceptionGate {
        mask,
        latency,
        omniscient,
    };
    let radius = CAPSULE_DIAMETER / 2.0;
    let length = course.geometry.length;
    let max_speed = cfg.max_speed();
    let time_limit = cfg.time_limit(length);
    let goal_s = length + 0.2;

    let mut events = vec![TrialEvent {
        t: 0.0,
        kind: EventKind::TrialStart,
    }];
    let mut samples: Vec<crate::model::GazeSample> = Vec::new();

    let mut avatar = AvatarState {
        s: 0.3,
        lat: 0.0,
        rel_heading: 0.0,
        speed: 0.0,
    };
    let dt = 1.0 / SAMPLE_RATE_HZ;
    let turn_rate = 120.0; // deg/s toward the commanded heading
    let mut prev_world_heading = course.geometry.base_heading(avatar.s);
    // debounce: obstacle id -> last tick in contact
    let mut last_contact: std::collections::BTreeMap<u32, f64> = std::collections::BTreeMap::new();
    let mut collisions = 0u32;
    let mut timed_out = false;
    let duration;

    let mut tick = 0u64;
    loop {
        let t = tick as f64 * dt;
        // body rotation carries the head
        let world_heading = course.geometry.base_heading(avatar.s) + avatar.rel_heading;
        let head = gc.head();
        gc.set_head_base(
            head.azimuth + (world_heading - prev_world_heading),
            head.elevation,
        );
        prev_world_heading = world_heading;
        samples.push(gc.tick(t));

        // perception: obstacles within a 12 m lookahead, masked
        let mut visible = Vec::new();
        for ob in &course.obstacles.obstacles {
            let ds = ob.s - avatar.s;
            if !(-1.0..12.0).contains(&ds) {
                continue;
            }
            let olat = ob.lat_at(t);
            let dlat = olat - avatar.lat;
            let dist_ground = (ds * ds + dlat * dlat).sqrt().max(0.3);
            let az_rel = (-dlat).atan2(ds).to_degrees();
            let az_world = course.geometry.base_heading(avatar.s) + az_rel;
            let el = (ob.height_offset()).atan2(dist_ground).to_degrees();
            let alpha = gate.alpha(&samples, AngularPos::new(az_world, el), t);
            if alpha < 0.5 {
                visible.push(VisibleObstacle {
                    id: ob.id,
                    s: ob.s,
                    lat: olat,
                    category: ob.category,
                    half_lat_extent: ob.footprint.half_lat_extent(),
                });
            }
        }
        let percept = NavPercept {
            t,
            avatar,
            base_heading: course.geometry.base_heading(avatar.s),
            max_speed,
            goal_s,
            visible: &visible,
        };
        let cmd = agent.tick(&percept, &mut gc);

        // apply command with a turn-rate limit
        let want = cmd.rel_heading.clamp(-85.0, 85.0);
        let d = (want - avatar.rel_heading).clamp(-turn_rate * dt, turn_rate * dt);
        avatar.rel_heading += d;
        avatar.speed = cmd.speed.clamp(0.0, max_speed);

        // movement with wall/obstacle blocking and debounced collisions
        let (sh, ch) = avatar.rel_heading.to_radians().sin_cos();
        let (ds, dlat) = (avatar.speed * ch * dt, -avatar.speed * sh * dt);
        let (ts, tlat) = (avatar.s + ds, avatar.lat + dlat);
        let contacts = detect_contacts(
            ts,
            tlat,
            radius,
            &course.obstacles.obstacles,
            length,
            cfg.goal_depth,
            t,
        );
        if contacts.is_empty() {
            avatar.s = ts;
            avatar.lat = tlat;
        } else {
            for &id in &contacts {
                let fresh = last_contact
                    .get(&id)
                    .map(|&lt| t - lt > 0.25)
                    .unwrap_or(true);
                if fresh {
                    collisions += 1;
                    events.push(TrialEvent {
                        t: quantize(t),
                        kind: EventKind::Collision { obstacle: id },
                    });
                }
                last_contact.insert(id, t);
            }
            // slide: keep the axis that stays clear
            if detect_contacts(ts, avatar.lat, radius, &course.obstacles.obstacles, length, cfg.goal_depth, t)
                .is_empty()
            {
                avatar.s = ts;
            } else if detect_contacts(avatar.s, tlat, radius, &course.obstacles.obstacles, length, cfg.goal_depth, t)
                .is_empty()
            {
                avatar.lat = tlat;
            }
        }

        tick += 1;
        if avatar.s >= goal_s {
            duration = tick as f64 * dt;
            events.push(TrialEvent {
                t: quantize(duration),
                kind: EventKind::GoalReached,
            });
            samples.push(gc.tick(duration));
            break;
        }
        if t >= time_limit {
            duration = t;
            timed_out = true;
            events.push(TrialEvent {
                t: quantize(t),
                kind: EventKind::Timeout,
            });
            break;
        }
    }

    let record = TrialRecord {
        version: SCHEMA_VERSION,
        task: TaskKind::Navigation,
        session: cfg.session,
        trial: cfg.trial,
        level: cfg.level,
        seed: cfg.seed,
        invalid: false,
        events,
        samples,
        outcome: Outcome::Navigation {
            duration,
            collisions,
            timeout: timed_out,
        },
    };
    record.validate()?;
    Ok(record)
}
