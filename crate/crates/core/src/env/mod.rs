//! Deterministic fixed-timestep 2D racing environment.
//!
//! One control window is 250 ms and runs five 50 ms physics substeps of a
//! kinematic bicycle model with a lateral grip limit. Opponents follow the
//! waypoint loop at fixed speeds. All arithmetic is plain `f64` in a fixed
//! order, so identical inputs produce bit-identical states.

pub mod cell;
pub mod geometry;
pub mod snapshot;
pub mod state;
pub mod track;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use cell::{rotation_bucket, CellKey, SpeedBucket, ROTATION_BUCKETS};
pub use geometry::{wrap_angle, Vec2};
pub use snapshot::{restore, snapshot, Snapshot};
pub use state::{
    Action, CarState, EnvError, GameState, RngStream, LAPS, MAX_SCORE, MAX_WINDOWS, OPPONENTS,
    SUBSTEPS, SUBSTEP_SECONDS, WINDOW_SECONDS,
};
pub use track::{SegmentShape, SubSegmentKind, TrackError, TrackLayout, TrackPos, CHECKPOINTS_PER_LAP};

use geometry::wrap_positive;

/// Number of per-window features.
pub const FEATURE_COUNT: usize = 24;
/// Cap for the nearest-visible-opponent distance.
pub const VIEW_RANGE: f64 = 500.0;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "pos_x",
    "pos_y",
    "heading",
    "speed",
    "steer",
    "gas",
    "on_grass",
    "crashed",
    "score",
    "lap",
    "segment",
    "sub_segment",
    "opp1_dist",
    "opp2_dist",
    "opp3_dist",
    "opp1_speed",
    "opp2_speed",
    "opp3_speed",
    "nearest_visible_opp",
    "lateral_offset",
    "heading_error",
    "speed_delta",
    "checkpoint_progress",
    "secs_since_crash",
];

/// Column indices into [`FeatureVector`].
pub mod feature {
    pub const POS_X: usize = 0;
    pub const POS_Y: usize = 1;
    pub const HEADING: usize = 2;
    pub const SPEED: usize = 3;
    pub const STEER: usize = 4;
    pub const GAS: usize = 5;
    pub const ON_GRASS: usize = 6;
    pub const CRASHED: usize = 7;
    pub const SCORE: usize = 8;
    pub const LAP: usize = 9;
    pub const SEGMENT: usize = 10;
    pub const SUB_SEGMENT: usize = 11;
    pub const OPP_DIST: usize = 12;
    pub const OPP_SPEED: usize = 15;
    pub const NEAREST_VISIBLE: usize = 18;
    pub const LATERAL_OFFSET: usize = 19;
    pub const HEADING_ERROR: usize = 20;
    pub const SPEED_DELTA: usize = 21;
    pub const CHECKPOINT_PROGRESS: usize = 22;
    pub const SECS_SINCE_CRASH: usize = 23;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CarParams {
    pub v_max: f64,
    pub accel: f64,
    pub brake: f64,
    pub coast_drag: f64,
    /// Multiplier on engine acceleration while on grass.
    pub grass_accel_factor: f64,
    pub grass_drag: f64,
    pub wheelbase: f64,
    pub max_steer: f64,
    /// Lateral acceleration limit, m/s^2.
    pub lateral_grip: f64,
    /// Speed loss while cornering past the grip limit, m/s^2.
    pub scrub: f64,
    /// Floor on the speed used for the yaw rate, so a stopped car can still turn.
    pub min_turn_speed: f64,
    /// Minimum center distance between the player and an opponent.
    pub contact_distance: f64,
    /// Half-angle of the forward view cone, degrees.
    pub view_half_angle_deg: f64,
    pub opponent_speeds: [f64; OPPONENTS],
    pub opponent_lanes: [f64; OPPONENTS],
    pub opponent_start: [f64; OPPONENTS],
    /// Relative spread of opponent speeds drawn at reset.
    pub opponent_speed_jitter: f64,
    pub player_start: f64,
}

impl Default for CarParams {
    fn default() -> Self {
        Self {
            v_max: 32.0,
            accel: 9.0,
            brake: 14.0,
            coast_drag: 1.2,
            grass_accel_factor: 0.6,
            grass_drag: 2.0,
            wheelbase: 2.6,
            max_steer: 0.42,
            lateral_grip: 14.0,
            scrub: 3.0,
            min_turn_speed: 3.0,
            contact_distance: 3.0,
            view_half_angle_deg: 60.0,
            opponent_speeds: [15.0, 18.0, 21.0],
            opponent_lanes: [3.0, -3.0, 3.0],
            opponent_start: [14.0, 250.0, 480.0],
            opponent_speed_jitter: 0.01,
            player_start: 2.0,
        }
    }
}

/// Result of discretizing a state, with a diagnostic when the player lies
/// outside the playfield bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretized {
    pub key: CellKey,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RacingEnv {
    layout: Arc<TrackLayout>,
    params: CarParams,
}

impl RacingEnv {
    pub fn new(layout: Arc<TrackLayout>, params: CarParams) -> Self {
        Self { layout, params }
    }

    pub fn with_default_track() -> Self {
        Self::new(Arc::new(TrackLayout::default_track()), CarParams::default())
    }

    pub fn layout(&self) -> &TrackLayout {
        &self.layout
    }

    pub fn layout_arc(&self) -> Arc<TrackLayout> {
        Arc::clone(&self.layout)
    }

    pub fn params(&self) -> &CarParams {
        &self.params
    }

    pub fn key_space(&self) -> usize {
        CellKey::key_space(self.layout.subsegment_count())
    }

    pub fn reset(&self, seed: u64) -> GameState {
        let p = &self.params;
        let layout = &*self.layout;
        let mut rng = RngStream::new(seed);
        let start_s = p.player_start;
        let position = layout.point_at(start_s, 0.0);
        let player = CarState {
            position,
            heading: wrap_angle(layout.tangent_at(start_s)),
            ..CarState::default()
        };
        let mut opponents = [CarState::default(); OPPONENTS];
        let mut progress = [0.0; OPPONENTS];
        for i in 0..OPPONENTS {
            let u = rng.next_f64();
            let speed = p.opponent_speeds[i] * (1.0 + p.opponent_speed_jitter * (2.0 * u - 1.0));
            progress[i] = p.opponent_start[i];
            opponents[i] = self.opponent_car(progress[i], p.opponent_lanes[i], speed);
        }
        GameState {
            player,
            opponents,
            opponent_progress: progress,
            opponent_lane: p.opponent_lanes,
            window_index: 0,
            lap: 1,
            score: 0,
            finished: false,
            track: layout.project(position),
            prev_speed: 0.0,
            secs_since_crash: 0.0,
            lap1_windows: None,
            rng_stream: rng,
        }
    }

    fn opponent_car(&self, progress: f64, lane: f64, speed: f64) -> CarState {
        let wp = &self.layout.opponent_waypoints;
        let tangent = wp.tangent_at(progress);
        CarState {
            position: wp.point_at(progress) + Vec2::from_angle(tangent).left() * lane,
            heading: wrap_angle(tangent),
            speed,
            ..CarState::default()
        }
    }

    /// Advances one 250 ms window.
    pub fn step(&self, state: &GameState, action: Action) -> Result<GameState, EnvError> {
        if state.finished {
            return Err(EnvError::Finished(state.window_index));
        }
        let mut s = state.clone();
        s.player.steer_input = action.steer();
        s.player.gas_input = action.gas();
        s.player.crashed_this_window = false;
        for _ in 0..SUBSTEPS {
            self.advance_opponents(&mut s);
            let before = s.track.s;
            self.advance_player(&mut s, action);
            self.update_checkpoints(&mut s, before);
            if s.score >= MAX_SCORE {
                break;
            }
        }
        s.window_index += 1;
        s.prev_speed = state.player.speed;
        s.secs_since_crash = if s.player.crashed_this_window {
            0.0
        } else {
            s.secs_since_crash + WINDOW_SECONDS
        };
        s.finished = s.score >= MAX_SCORE || s.window_index >= MAX_WINDOWS;
        Ok(s)
    }

    fn advance_opponents(&self, s: &mut GameState) {
        let loop_len = self.layout.opponent_waypoints.length();
        for i in 0..OPPONENTS {
            let speed = s.opponents[i].speed;
            s.opponent_progress[i] =
                wrap_positive(s.opponent_progress[i] + speed * SUBSTEP_SECONDS, loop_len);
            s.opponents[i] = self.opponent_car(s.opponent_progress[i], s.opponent_lane[i], speed);
        }
    }

    fn advance_player(&self, s: &mut GameState, action: Action) {
        let p = &self.params;
        let layout = &*self.layout;
        let dt = SUBSTEP_SECONDS;
        let car = &mut s.player;
        let on_grass = s.track.offset.abs() > layout.road_half_width;
        let v = car.speed;

        let mut accel = match action.gas() {
            1 => {
                let ratio = v / p.v_max;
                let a = p.accel * (1.0 - ratio * ratio);
                if on_grass {
                    a * p.grass_accel_factor
                } else {
                    a
                }
            }
            0 => -p.coast_drag,
            _ => -p.brake,
        };
        if on_grass && v > 0.0 {
            accel -= p.grass_drag;
        }

        let requested_yaw =
            v.max(p.min_turn_speed) / p.wheelbase * (action.steer() as f64 * p.max_steer).tan();
        let max_yaw = p.lateral_grip / v.max(1.0);
        let yaw = requested_yaw.clamp(-max_yaw, max_yaw);
        if requested_yaw.abs() > max_yaw {
            accel -= p.scrub;
        }

        car.speed = (v + accel * dt).clamp(0.0, p.v_max);
        car.heading = wrap_angle(car.heading + yaw * dt);
        car.position = car.position + Vec2::from_angle(car.heading) * (car.speed * dt);

        for opp in &s.opponents {
            let d = car.position - opp.position;
            let dist = d.norm();
            if dist < p.contact_distance {
                let away = if dist > 1e-9 {
                    d * (1.0 / dist)
                } else {
                    Vec2::from_angle(car.heading).left()
                };
                car.position = opp.position + away * p.contact_distance;
                car.crashed_this_window = true;
            }
        }

        let mut tp = layout.project(car.position);
        if tp.offset.abs() > layout.barrier_half_width {
            let outward = (car.position - tp.foot) * (1.0 / tp.offset.abs());
            car.position = tp.foot + outward * layout.barrier_half_width;
            let mut vel = Vec2::from_angle(car.heading) * car.speed;
            let vn = vel.dot(outward);
            if vn > 0.0 {
                vel = vel - outward * vn;
                car.speed = vel.norm().min(p.v_max);
            }
            car.crashed_this_window = true;
            tp = layout.project(car.position);
        }
        car.on_grass = tp.offset.abs() > layout.road_half_width;
        s.track = tp;
    }

    fn update_checkpoints(&self, s: &mut GameState, before: f64) {
        if s.score >= MAX_SCORE {
            return;
        }
        let layout = &*self.layout;
        let ds = layout.arc_delta(before, s.track.s);
        if ds <= 0.0 {
            return;
        }
        let next = s.score as usize % CHECKPOINTS_PER_LAP;
        let gate = layout.gate_s(next);
        let ahead = wrap_positive(gate - before, layout.length());
        if ahead > 0.0 && ahead <= ds {
            s.score += 1;
            if s.score as usize == CHECKPOINTS_PER_LAP {
                s.lap = 2;
                s.lap1_windows = Some(s.window_index + 1);
            }
        }
    }

    /// Per-window feature vector (end-of-window values; flags cover the whole window).
    pub fn features(&self, s: &GameState) -> FeatureVector {
        use feature::*;
        let layout = &*self.layout;
        let p = &s.player;
        let mut f = [0.0; FEATURE_COUNT];
        f[POS_X] = p.position.x;
        f[POS_Y] = p.position.y;
        f[HEADING] = p.heading;
        f[SPEED] = p.speed;
        f[STEER] = p.steer_input as f64;
        f[GAS] = p.gas_input as f64;
        f[ON_GRASS] = p.on_grass as u8 as f64;
        f[CRASHED] = p.crashed_this_window as u8 as f64;
        f[SCORE] = s.score as f64;
        f[LAP] = s.lap as f64;
        f[SEGMENT] = s.track.segment as f64;
        f[SUB_SEGMENT] = layout.subsegment_id(s.track.segment, s.track.offset) as f64;
        for (i, opp) in s.opponents.iter().enumerate() {
            f[OPP_DIST + i] = opp.position.dist(p.position);
            f[OPP_SPEED + i] = opp.speed;
        }
        f[NEAREST_VISIBLE] = self.nearest_visible_opponent(s);
        f[LATERAL_OFFSET] = s.track.offset;
        f[HEADING_ERROR] = wrap_angle(p.heading - s.track.tangent);
        f[SPEED_DELTA] = p.speed - s.prev_speed;
        f[CHECKPOINT_PROGRESS] = self.checkpoint_progress(s);
        f[SECS_SINCE_CRASH] = s.secs_since_crash;
        FeatureVector(f)
    }

    /// Distance to the closest opponent inside the forward view cone, capped at 500.
    pub fn nearest_visible_opponent(&self, s: &GameState) -> f64 {
        let half = self.params.view_half_angle_deg.to_radians();
        let me = &s.player;
        s.opponents
            .iter()
            .filter_map(|o| {
                let d = o.position - me.position;
                let dist = d.norm();
                let visible = dist <= 1e-9 || wrap_angle(d.angle() - me.heading).abs() <= half;
                (visible && dist <= VIEW_RANGE).then_some(dist)
            })
            .fold(VIEW_RANGE, f64::min)
    }

    fn checkpoint_progress(&self, s: &GameState) -> f64 {
        if s.score >= MAX_SCORE {
            return 1.0;
        }
        let layout = &*self.layout;
        let next = s.score as usize % CHECKPOINTS_PER_LAP;
        let prev = (next + CHECKPOINTS_PER_LAP - 1) % CHECKPOINTS_PER_LAP;
        let g_prev = layout.gate_s(prev);
        let span = wrap_positive(layout.gate_s(next) - g_prev, layout.length());
        (layout.arc_delta(g_prev, s.track.s) / span).clamp(0.0, 1.0)
    }

    pub fn discretize(&self, s: &GameState) -> CellKey {
        let d = self.discretize_with_diagnostics(s);
        if let Some(msg) = &d.diagnostic {
            log::warn!("{msg}");
        }
        d.key
    }

    pub fn discretize_with_diagnostics(&self, s: &GameState) -> Discretized {
        let layout = &*self.layout;
        let diagnostic = (!layout.bounds.contains(s.player.position)).then(|| {
            format!(
                "window {}: player at ({:.3}, {:.3}) outside playfield; using nearest sub-segment",
                s.window_index, s.player.position.x, s.player.position.y
            )
        });
        let sub_segment = layout.subsegment_id(s.track.segment, s.track.offset);
        let speed_bucket = if s.player.speed >= self.params.v_max / 2.0 {
            SpeedBucket::Fast
        } else {
            SpeedBucket::Slow
        };
        let err = wrap_angle(s.player.heading - s.track.tangent).to_degrees();
        let opponent_proximity = s.opponents.iter().any(|o| {
            let tp = layout.project(o.position);
            layout.subsegment_id(tp.segment, tp.offset) == sub_segment
        });
        Discretized {
            key: CellKey {
                lap: s.lap,
                sub_segment,
                speed_bucket,
                rotation_bucket: rotation_bucket(err),
                opponent_proximity,
            },
            diagnostic,
        }
    }

    /// Replays an action log from `reset(seed)`, returning every intermediate state
    /// (index 0 is the reset state).
    pub fn replay(&self, seed: u64, actions: &[Action]) -> Result<Vec<GameState>, EnvError> {
        let mut states = Vec::with_capacity(actions.len() + 1);
        let mut s = self.reset(seed);
        states.push(s.clone());
        for &a in actions {
            s = self.step(&s, a)?;
            states.push(s.clone());
        }
        Ok(states)
    }

    /// Final state of replaying `actions` from reset.
    pub fn replay_final(&self, seed: u64, actions: &[Action]) -> Result<GameState, EnvError> {
        let mut s = self.reset(seed);
        for &a in actions {
            s = self.step(&s, a)?;
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> RacingEnv {
        RacingEnv::with_default_track()
    }

    fn full_gas() -> Action {
        Action::new(0, 1).unwrap()
    }

    #[test]
    fn reset_is_deterministic() {
        let e = env();
        let a = e.reset(7);
        let b = e.reset(7);
        assert_eq!(a, b);
        assert_eq!(snapshot(&a).as_bytes(), snapshot(&b).as_bytes());
        assert_eq!(a.score, 0);
        assert_eq!(a.elapsed_s(), 0.0);
        assert_eq!(a.lap, 1);
        assert_eq!(a.window_index, 0);
        assert_eq!(a.player.speed, 0.0);
        assert_ne!(e.reset(8).opponents[0].speed, a.opponents[0].speed);
    }

    #[test]
    fn full_gas_moves_along_tangent() {
        let e = env();
        let s0 = e.reset(7);
        let s1 = e.step(&s0, full_gas()).unwrap();
        assert!(s1.player.speed > 0.0);
        let moved = s1.player.position - s0.player.position;
        assert!(moved.dot(Vec2::from_angle(e.layout().tangent_at(2.0))) > 0.0);
        assert!(moved.y.abs() < 1e-12);
        assert_eq!(s1.window_index, 1);
        assert_eq!(s1.elapsed_s(), 0.25);
    }

    #[test]
    fn stepping_is_bit_identical() {
        let e = env();
        let mut s = e.reset(3);
        for i in 0..60 {
            let a = Action::from_index((i * 7) % 9);
            let x = e.step(&s, a).unwrap();
            let y = e.step(&s, a).unwrap();
            assert_eq!(snapshot(&x).as_bytes(), snapshot(&y).as_bytes());
            s = x;
        }
    }

    #[test]
    fn idle_episode_times_out_at_two_minutes() {
        let e = env();
        let mut s = e.reset(1);
        let idle = Action::new(0, 0).unwrap();
        let mut n = 0;
        while !s.finished {
            s = e.step(&s, idle).unwrap();
            n += 1;
        }
        assert_eq!(n, 480);
        assert_eq!(s.elapsed_s(), 120.0);
        assert_eq!(s.score, 0);
        assert_eq!(e.step(&s, idle), Err(EnvError::Finished(480)));
    }

    #[test]
    fn reset_features() {
        let e = env();
        let f = e.features(&e.reset(7));
        assert_eq!(f.get(feature::SCORE), 0.0);
        assert_eq!(f.get(feature::LAP), 1.0);
        assert!(f.is_finite());
        assert!((0.0..=VIEW_RANGE).contains(&f.get(feature::NEAREST_VISIBLE)));
    }

    #[test]
    fn nearest_visible_capped_when_nothing_ahead() {
        let e = env();
        let mut s = e.reset(7);
        // every opponent sits just behind the player
        let behind = e.layout().length() - 20.0;
        for (i, o) in s.opponents.iter_mut().enumerate() {
            o.position = e.layout().point_at(behind + i as f64, 0.0);
        }
        assert_eq!(e.features(&s).get(feature::NEAREST_VISIBLE), VIEW_RANGE);
    }

    #[test]
    fn opponent_on_same_subsegment_sets_proximity() {
        let e = env();
        let mut s = e.reset(7);
        // place the first opponent 8 m ahead in the player's lane
        s.opponents[0].position = e.layout().point_at(10.0, 0.5);
        let f = e.features(&s);
        assert!(f.get(feature::NEAREST_VISIBLE) < VIEW_RANGE);
        assert!((f.get(feature::NEAREST_VISIBLE) - 8.0).abs() < 0.6);
        assert!(e.discretize(&s).opponent_proximity);
    }

    #[test]
    fn start_state_key() {
        let e = env();
        let s = e.reset(7);
        let k = e.discretize(&s);
        assert_eq!(k.lap, 1);
        // on the centerline counts as the left on-road sub-segment of segment 0
        assert_eq!(k.sub_segment, 0);
        assert_eq!(k.speed_bucket, SpeedBucket::Slow);
        // heading error exactly 0 sits on a boundary and goes to the lower bucket
        assert_eq!(k.rotation_bucket, 2);
        // opponents start in lanes at +3/-3 m on segment 0
        let opp_subs: Vec<u16> = s
            .opponents
            .iter()
            .map(|o| {
                let tp = e.layout().project(o.position);
                e.layout().subsegment_id(tp.segment, tp.offset)
            })
            .collect();
        assert_eq!(k.opponent_proximity, opp_subs.contains(&0));
        assert!(k.opponent_proximity);
    }

    #[test]
    fn speed_only_changes_speed_bucket() {
        let e = env();
        let mut a = e.reset(7);
        let mut b = a.clone();
        a.player.speed = 0.1 * e.params().v_max;
        b.player.speed = 0.9 * e.params().v_max;
        let ka = e.discretize(&a);
        let kb = e.discretize(&b);
        assert_eq!(ka.speed_bucket, SpeedBucket::Slow);
        assert_eq!(kb.speed_bucket, SpeedBucket::Fast);
        assert_eq!(
            CellKey {
                speed_bucket: SpeedBucket::Fast,
                ..ka
            },
            kb
        );
    }

    #[test]
    fn off_playfield_is_flagged() {
        let e = env();
        let mut s = e.reset(7);
        s.player.position = Vec2::new(1000.0, 1000.0);
        let d = e.discretize_with_diagnostics(&s);
        assert!(d.diagnostic.is_some());
    }

    #[test]
    fn barrier_contact_sets_crash_and_clamps() {
        let e = env();
        let mut s = e.reset(7);
        // aim straight at the left barrier at speed
        s.player.heading = std::f64::consts::FRAC_PI_2;
        s.player.speed = 20.0;
        let a = Action::new(0, 1).unwrap();
        let mut crashed = false;
        for _ in 0..8 {
            s = e.step(&s, a).unwrap();
            crashed |= s.player.crashed_this_window;
            assert!(s.track.offset.abs() <= e.layout().barrier_half_width + 1e-9);
        }
        assert!(crashed);
        assert!(s.player.speed < 1.0, "normal velocity zeroed: {}", s.player.speed);
    }
}
