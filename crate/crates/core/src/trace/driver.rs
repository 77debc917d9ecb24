//! Scripted drivers standing in for human players of different skill.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{wrap_angle, Action, GameState, RacingEnv, Vec2};
use crate::tier::Tier;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverProfile {
    /// Cruise speed as a fraction of `v_max`.
    pub speed_fraction: f64,
    /// Fraction of the grip-limited speed the driver dares in corners.
    pub corner_margin: f64,
    /// Pure-pursuit lookahead, meters.
    pub lookahead: f64,
    /// How far toward the inside of a curve the line is drawn, as a fraction
    /// of the road half-width.
    pub line_cut: f64,
    pub steer_deadband_deg: f64,
    /// Probability per window of replacing the steering input with a random one.
    pub steer_noise: f64,
    /// Probability per window of starting a mistake (locked steering, full gas).
    pub mistake_rate: f64,
    pub mistake_windows: u32,
    /// Distance ahead within which the driver steers around opponents, meters
    /// (0 disables avoidance).
    pub avoid_range: f64,
    /// Relative per-session spread of `speed_fraction` and `corner_margin`.
    pub session_jitter: f64,
}

impl DriverProfile {
    pub fn for_tier(tier: Tier) -> Self {
        match tier {
            Tier::Expert => Self {
                speed_fraction: 0.96,
                corner_margin: 0.97,
                lookahead: 14.0,
                line_cut: 0.8,
                steer_deadband_deg: 3.0,
                steer_noise: 0.02,
                mistake_rate: 0.002,
                mistake_windows: 2,
                avoid_range: 30.0,
                session_jitter: 0.02,
            },
            Tier::Advanced => Self {
                speed_fraction: 0.78,
                corner_margin: 0.86,
                lookahead: 12.0,
                line_cut: 0.5,
                steer_deadband_deg: 4.0,
                steer_noise: 0.05,
                mistake_rate: 0.005,
                mistake_windows: 2,
                avoid_range: 24.0,
                session_jitter: 0.03,
            },
            Tier::Intermediate => Self {
                speed_fraction: 0.6,
                corner_margin: 0.76,
                lookahead: 10.0,
                line_cut: 0.2,
                steer_deadband_deg: 5.0,
                steer_noise: 0.1,
                mistake_rate: 0.02,
                mistake_windows: 2,
                avoid_range: 14.0,
                session_jitter: 0.03,
            },
            Tier::Beginner => Self {
                speed_fraction: 0.38,
                corner_margin: 0.62,
                lookahead: 9.0,
                line_cut: 0.0,
                steer_deadband_deg: 6.0,
                steer_noise: 0.12,
                mistake_rate: 0.05,
                mistake_windows: 2,
                avoid_range: 0.0,
                session_jitter: 0.04,
            },
        }
    }

    /// A copy with speed parameters scaled by a per-session factor drawn from `rng`.
    pub fn jittered(&self, rng: &mut ChaCha8Rng) -> Self {
        let mut p = *self;
        let u: f64 = rng.gen_range(-1.0..1.0);
        p.speed_fraction = (p.speed_fraction * (1.0 + self.session_jitter * u)).clamp(0.05, 1.0);
        let v: f64 = rng.gen_range(-1.0..1.0);
        p.corner_margin = (p.corner_margin * (1.0 + self.session_jitter * v)).clamp(0.05, 1.2);
        p
    }
}

/// Pure-pursuit driver with a speed planner and scripted imperfections.
#[derive(Debug, Clone)]
pub struct ScriptedDriver {
    profile: DriverProfile,
    mistake_left: u32,
    mistake_steer: i8,
}

impl ScriptedDriver {
    pub fn new(profile: DriverProfile) -> Self {
        Self {
            profile,
            mistake_left: 0,
            mistake_steer: 0,
        }
    }

    pub fn profile(&self) -> &DriverProfile {
        &self.profile
    }

    pub fn decide(&mut self, env: &RacingEnv, state: &GameState, rng: &mut ChaCha8Rng) -> Action {
        let p = self.profile;
        // off the road the driver concentrates on getting back
        let recovering = state.track.offset.abs() > env.layout().road_half_width;
        if recovering {
            self.mistake_left = 0;
        } else if self.mistake_left == 0 && rng.gen_bool(p.mistake_rate) {
            self.mistake_left = p.mistake_windows;
            self.mistake_steer = if rng.gen_bool(0.5) { 1 } else { -1 };
        }
        if self.mistake_left > 0 {
            self.mistake_left -= 1;
            return Action::new(self.mistake_steer, 1).expect("valid input");
        }

        let layout = env.layout();
        let car = &state.player;
        let s = state.track.s;

        let target_s = s + p.lookahead + 0.3 * car.speed;
        let seg = &layout.segments[layout.segment_at(target_s)];
        let inside = if seg.curvature > 1e-4 { seg.turn.signum() } else { 0.0 };
        let mut offset = inside * p.line_cut * 0.8 * layout.road_half_width;
        if p.avoid_range > 0.0 {
            offset = self.avoid(env, state, offset);
        }
        let target: Vec2 = layout.point_at(target_s, offset);
        let err = wrap_angle((target - car.position).angle() - car.heading).to_degrees();
        let mut steer = if err > p.steer_deadband_deg {
            1
        } else if err < -p.steer_deadband_deg {
            -1
        } else {
            0
        };
        if !recovering && rng.gen_bool(p.steer_noise) {
            steer = rng.gen_range(-1..=1);
        }

        let target_speed = self.target_speed(env, state);
        let gas = if car.speed < target_speed - 0.5 {
            1
        } else if car.speed > target_speed + 1.0 {
            -1
        } else {
            0
        };
        Action::new(steer, gas).expect("valid input")
    }

    /// Moves the aimed lateral offset to the far side of the closest opponent
    /// ahead that blocks it.
    fn avoid(&self, env: &RacingEnv, state: &GameState, offset: f64) -> f64 {
        let layout = env.layout();
        let half = 0.8 * layout.road_half_width;
        let mut closest: Option<(f64, f64)> = None;
        for opp in &state.opponents {
            let pos = layout.project(opp.position);
            let ahead = layout.arc_delta(state.track.s, pos.s);
            if ahead > 0.0
                && ahead < self.profile.avoid_range
                && (pos.offset - offset).abs() < 4.0
                && closest.is_none_or(|(d, _)| ahead < d)
            {
                closest = Some((ahead, pos.offset));
            }
        }
        match closest {
            Some((_, o)) if o >= 0.0 => (o - 5.0).clamp(-half, half),
            Some((_, o)) => (o + 5.0).clamp(-half, half),
            None => offset,
        }
    }

    /// Cruise speed limited by every curve within braking range ahead.
    fn target_speed(&self, env: &RacingEnv, state: &GameState) -> f64 {
        let params = env.params();
        let layout = env.layout();
        let p = &self.profile;
        let cruise = p.speed_fraction * params.v_max;
        let decel = params.brake * 0.6;
        let horizon = cruise * cruise / (2.0 * decel) + 10.0;
        let mut limit = cruise;
        let mut d = 0.0;
        let step = 4.0;
        while d <= horizon {
            let seg = &layout.segments[layout.segment_at(state.track.s + d)];
            if seg.curvature > 1e-4 {
                let corner = (params.lateral_grip / seg.curvature).sqrt() * p.corner_margin;
                let allowed = (corner * corner + 2.0 * decel * d).sqrt();
                limit = limit.min(allowed);
            }
            d += step;
        }
        limit
    }
}
