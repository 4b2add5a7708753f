//! Gaze trace synthesis: turns high-level gaze commands into realistic
//! head+eye sample streams for the analytics pipeline.
//!
//! A command triggers a saccade with a symmetric raised-cosine velocity
//! profile and a main-sequence duration (`base + per_deg * amplitude`).
//! The eye takes as much of the displacement as its tracking range
//! allows; the head carries the remainder over a 1.5x longer window
//! (slower dynamics). Between saccades the eye jitters with a small
//! fixational velocity noise so per-trial velocity statistics are
//! non-degenerate.

use crate::agents::AgentConfig;
use crate::geometry::{combine_gaze, wrap_degrees, AngularPos};
use crate::model::{quantize, GazeSample, SAMPLE_RATE_HZ};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A commanded gaze shift toward a world-frame target.
#[derive(Debug, Clone, Copy)]
pub struct GazeCommand {
    pub target: AngularPos,
}

/// Head/eye allocation chosen for a command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeSplit {
    pub eye_amplitude: f64,
    pub head_amplitude: f64,
}

impl GazeSplit {
    /// head / eye contribution ratio; infinite for head-only shifts.
    pub fn head_eye_ratio(&self) -> f64 {
        if self.eye_amplitude == 0.0 {
            f64::INFINITY
        } else {
            self.head_amplitude / self.eye_amplitude
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct SaccadePlan {
    t0: f64,
    eye_duration: f64,
    head_duration: f64,
    eye_from: [f64; 2],
    eye_delta: [f64; 2],
    head_from: [f64; 2],
    head_delta: [f64; 2],
}

impl SaccadePlan {
    fn done(&self, t: f64) -> bool {
        t >= self.t0 + self.eye_duration.max(self.head_duration)
    }
}

/// Displacement fraction of a raised-cosine velocity profile at phase `u`.
fn profile(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u - (std::f64::consts::TAU * u).sin() / std::f64::consts::TAU
}

fn norm(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Synthesizes one participant's gaze stream at the nominal sample rate.
pub struct GazeController {
    head: [f64; 2],
    eye: [f64; 2],
    plan: Option<SaccadePlan>,
    eye_range: f64,
    duration_base: f64,
    duration_per_deg: f64,
    jitter_step: f64,
    invalid_rate: f64,
    rng: ChaCha8Rng,
    sample_period: f64,
}

impl GazeController {
    pub fn new(cfg: &AgentConfig, seed: u64) -> Self {
        GazeController {
            head: [0.0, 0.0],
            eye: [0.0, 0.0],
            plan: None,
            eye_range: cfg.eye_range,
            duration_base: cfg.saccade_duration_base,
            duration_per_deg: cfg.saccade_duration_per_deg,
            jitter_step: cfg.fixation_jitter / SAMPLE_RATE_HZ,
            invalid_rate: cfg.invalid_rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            sample_period: 1.0 / SAMPLE_RATE_HZ,
        }
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    /// Current combined world-frame gaze direction.
    pub fn gaze(&self) -> AngularPos {
        combine_gaze(
            AngularPos::new(self.head[0], self.head[1]),
            AngularPos::new(self.eye[0], self.eye[1]),
        )
    }

    pub fn head(&self) -> AngularPos {
        AngularPos::new(self.head[0], self.head[1])
    }

    pub fn is_saccading(&self, t: f64) -> bool {
        self.plan.map(|p| !p.done(t)) == Some(true)
    }

    /// Sets the head baseline directly (used by the navigation runner,
    /// where the body heading carries the head). Does not count as a
    /// saccade; callers apply it gradually.
    pub fn set_head_base(&mut self, azimuth: f64, elevation: f64) {
        self.head = [azimuth, elevation];
    }

    /// Starts a saccade toward the command target. The eye moves first up
    /// to its range; the head carries the remainder. Returns the chosen
    /// split. Zero-amplitude commands (< 0.01°) are ignored.
    pub fn command(&mut self, t: f64, cmd: GazeCommand) -> GazeSplit {
        self.settle(t);
        let current = self.gaze();
        let delta = [
            wrap_degrees(cmd.target.azimuth - current.azimuth),
            cmd.target.elevation - current.elevation,
        ];
        let amplitude = norm(delta);
        if amplitude < 0.01 {
            return GazeSplit {
                eye_amplitude: 0.0,
                head_amplitude: 0.0,
            };
        }
        // eye-first split with range clamp
        let eye_target = [self.eye[0] + delta[0], self.eye[1] + delta[1]];
        let eye_target_norm = norm(eye_target);
        let eye_final = if eye_target_norm <= self.eye_range {
            eye_target
        } else {
            let s = self.eye_range / eye_target_norm;
            [eye_target[0] * s, eye_target[1] * s]
        };
        let eye_delta = [eye_final[0] - self.eye[0], eye_final[1] - self.eye[1]];
        let head_delta = [delta[0] - eye_delta[0], delta[1] - eye_delta[1]];
        let eye_duration = self.duration_base + self.duration_per_deg * amplitude;
        let head_amp = norm(head_delta);
        let head_duration = if head_amp > 1e-12 {
            eye_duration * 1.5
        } else {
            eye_duration
        };
        self.plan = Some(SaccadePlan {
            t0: t,
            eye_duration,
            head_duration,
            eye_from: self.eye,
            eye_delta,
            head_from: self.head,
            head_delta,
        });
        GazeSplit {
            eye_amplitude: norm(eye_delta),
            head_amplitude: head_amp,
        }
    }

    /// Evaluates the active plan at `t`, committing it when finished.
    fn settle(&mut self, t: f64) {
        if let Some(p) = self.plan {
            let ue = profile((t - p.t0) / p.eye_duration);
            let uh = profile((t - p.t0) / p.head_duration);
            self.eye = [p.eye_from[0] + p.eye_delta[0] * ue, p.eye_from[1] + p.eye_delta[1] * ue];
            self.head = [
                p.head_from[0] + p.head_delta[0] * uh,
                p.head_from[1] + p.head_delta[1] * uh,
            ];
            if p.done(t) {
                self.plan = None;
            }
        }
    }

    /// Advances to time `t` (one call per sample tick) and emits the frame.
    pub fn tick(&mut self, t: f64) -> GazeSample {
        let saccading = self.is_saccading(t);
        self.settle(t);
        if !saccading {
            // fixational jitter, re-clamped into the tracking range
            let (dx, dy) = self.gaussian_pair();
            self.eye[0] += dx * self.jitter_step;
            self.eye[1] += dy * self.jitter_step;
            let n = norm(self.eye);
            if n > self.eye_range {
                let s = self.eye_range / n;
                self.eye[0] *= s;
                self.eye[1] *= s;
            }
        }
        let valid = !(self.invalid_rate > 0.0 && self.rng.gen_bool(self.invalid_rate));
        GazeSample {
            t: quantize(t),
            head_azimuth: quantize(self.head[0]),
            head_elevation: quantize(self.head[1]),
            eye_azimuth: quantize(self.eye[0]),
            eye_elevation: quantize(self.eye[1]),
            valid,
        }
    }

    fn gaussian_pair(&mut self) -> (f64, f64) {
        let u1: f64 = self.rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = self.rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }

    /// Runs the controller in isolation: `pre` seconds of fixation, one
    /// command, then samples until the saccade completes plus `post`
    /// seconds. Used by tests and the analytics validation harness.
    pub fn run_isolated(&mut self, cmd: GazeCommand, pre: f64, post: f64) -> Vec<GazeSample> {
        let mut samples = Vec::new();
        let mut k = 0u64;
        let pre_ticks = (pre * SAMPLE_RATE_HZ).round() as u64;
        for _ in 0..pre_ticks {
            samples.push(self.tick(k as f64 * self.sample_period));
            k += 1;
        }
        let t_cmd = k as f64 * self.sample_period;
        self.command(t_cmd, cmd);
        loop {
            let t = k as f64 * self.sample_period;
            samples.push(self.tick(t));
            k += 1;
            if !self.is_saccading(k as f64 * self.sample_period) {
                break;
            }
        }
        let post_ticks = (post * SAMPLE_RATE_HZ).round() as u64;
        for _ in 0..post_ticks {
            samples.push(self.tick(k as f64 * self.sample_period));
            k += 1;
        }
        samples
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quiet_config() -> AgentConfig {
        AgentConfig {
            fixation_jitter: 0.0,
            invalid_rate: 0.0,
            ..AgentConfig::default()
        }
    }

    #[test]
    fn within_range_command_is_pure_eye() {
        let mut g = GazeController::new(&quiet_config(), 1);
        let split = g.command(
            0.0,
            GazeCommand {
                target: AngularPos::new(10.0, 0.0),
            },
        );
        assert_abs_diff_eq!(split.eye_amplitude, 10.0, epsilon = 1e-9);
        assert_eq!(split.head_amplitude, 0.0);
        assert_eq!(split.head_eye_ratio(), 0.0);
    }

    #[test]
    fn oversized_command_splits_eye_first() {
        let mut g = GazeController::new(&quiet_config(), 1);
        let split = g.command(
            0.0,
            GazeCommand {
                target: AngularPos::new(60.0, 0.0),
            },
        );
        assert_abs_diff_eq!(split.eye_amplitude, 25.0, epsilon = 1e-9);
        assert_abs_diff_eq!(split.head_amplitude, 35.0, epsilon = 1e-9);
        assert_abs_diff_eq!(split.head_eye_ratio(), 1.4, epsilon = 1e-9);
    }

    #[test]
    fn zero_amplitude_command_is_ignored() {
        let mut g = GazeController::new(&quiet_config(), 1);
        let split = g.command(
            0.0,
            GazeCommand {
                target: AngularPos::CENTER,
            },
        );
        assert_eq!(split.eye_amplitude, 0.0);
        assert!(!g.is_saccading(0.001));
    }

    #[test]
    fn saccade_lands_on_target_and_respects_range() {
        let mut g = GazeController::new(&quiet_config(), 1);
        let target = AngularPos::new(40.0, 12.0);
        let samples = g.run_isolated(GazeCommand { target }, 0.2, 0.2);
        let last = samples.last().unwrap();
        let gaze = last.combined();
        // planar head split means the 3D-composed landing point is close
        // to, not exactly, the commanded target
        assert!(crate::geometry::angular_distance(gaze, target) < 0.6);
        let eye_norm = (last.eye_azimuth.powi(2) + last.eye_elevation.powi(2)).sqrt();
        assert!(eye_norm <= 25.0 + 1e-9);
    }

    #[test]
    fn peak_velocity_exceeds_detection_scale() {
        let mut g = GazeController::new(&quiet_config(), 1);
        let samples = g.run_isolated(
            GazeCommand {
                target: AngularPos::new(20.0, 0.0),
            },
            0.2,
            0.2,
        );
        let mut vmax = 0.0f64;
        for w in samples.windows(2) {
            let v = crate::geometry::angular_distance(w[0].combined(), w[1].combined())
                / (w[1].t - w[0].t);
            vmax = vmax.max(v);
        }
        // raised cosine peak = 2A/D = 2*20/0.06 ≈ 667°/s
        assert!(vmax > 300.0, "peak velocity {vmax}");
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = AgentConfig::default();
        let run = |seed| {
            let mut g = GazeController::new(&cfg, seed);
            g.run_isolated(
                GazeCommand {
                    target: AngularPos::new(15.0, -5.0),
                },
                0.3,
                0.3,
            )
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }
}
