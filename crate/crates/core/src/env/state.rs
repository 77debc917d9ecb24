use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::Vec2;
use super::track::TrackPos;

/// Length of one control window in seconds.
pub const WINDOW_SECONDS: f64 = 0.25;
/// Physics substeps per control window.
pub const SUBSTEPS: usize = 5;
pub const SUBSTEP_SECONDS: f64 = WINDOW_SECONDS / SUBSTEPS as f64;
/// Two-minute race limit, in windows.
pub const MAX_WINDOWS: u32 = 480;
pub const LAPS: u8 = 2;
/// Maximum score for a two-lap race.
pub const MAX_SCORE: u8 = 16;
pub const OPPONENTS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("cannot step a finished episode (window {0})")]
    Finished(u32),
    #[error("invalid action input {0}; steer and gas must be -1, 0 or 1")]
    InvalidInput(i8),
    #[error("snapshot decode error: {0}")]
    Snapshot(String),
    #[error("replay diverged at window {window}: {detail}")]
    ReplayDivergence { window: usize, detail: String },
}

/// One discrete control input held for a whole window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action {
    steer: i8,
    gas: i8,
}

impl Action {
    pub const COUNT: usize = 9;

    pub fn new(steer: i8, gas: i8) -> Result<Self, EnvError> {
        for v in [steer, gas] {
            if !(-1..=1).contains(&v) {
                return Err(EnvError::InvalidInput(v));
            }
        }
        Ok(Self { steer, gas })
    }

    /// Positive steer turns left.
    pub fn steer(self) -> i8 {
        self.steer
    }

    pub fn gas(self) -> i8 {
        self.gas
    }

    /// Index into the 9 (steer, gas) combinations, steer-major.
    pub fn index(self) -> usize {
        ((self.steer + 1) * 3 + (self.gas + 1)) as usize
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < Self::COUNT, "action index {i} out of range");
        Self {
            steer: (i / 3) as i8 - 1,
            gas: (i % 3) as i8 - 1,
        }
    }

    pub fn all() -> impl Iterator<Item = Action> {
        (0..Self::COUNT).map(Self::from_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CarState {
    pub position: Vec2,
    /// Radians, wrapped to (-pi, pi].
    pub heading: f64,
    /// m/s, in [0, v_max].
    pub speed: f64,
    pub steer_input: i8,
    pub gas_input: i8,
    pub on_grass: bool,
    pub crashed_this_window: bool,
}

/// Counter-based deterministic random stream (SplitMix64 over `seed + counter`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub counter: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        let mut z = self
            .seed
            .wrapping_add(self.counter.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Full simulator state. A plain value: cloning it forks the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub player: CarState,
    pub opponents: [CarState; OPPONENTS],
    /// Arc length of each opponent along the waypoint loop.
    pub opponent_progress: [f64; OPPONENTS],
    /// Lateral lane offset of each opponent.
    pub opponent_lane: [f64; OPPONENTS],
    pub window_index: u32,
    pub lap: u8,
    pub score: u8,
    pub finished: bool,
    /// Player projection onto the centerline at the end of the last substep.
    pub track: TrackPos,
    /// Player speed at the end of the previous window.
    pub prev_speed: f64,
    pub secs_since_crash: f64,
    /// Window (1-based count) in which lap 1 was completed.
    pub lap1_windows: Option<u32>,
    pub rng_stream: RngStream,
}

impl GameState {
    pub fn elapsed_s(&self) -> f64 {
        self.window_index as f64 * WINDOW_SECONDS
    }

    /// Score normalized to [0, 1] by the two-lap maximum.
    pub fn normalized_score(&self) -> f64 {
        self.score as f64 / MAX_SCORE as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_index_round_trip() {
        for i in 0..Action::COUNT {
            assert_eq!(Action::from_index(i).index(), i);
        }
        assert_eq!(Action::new(-1, -1).unwrap().index(), 0);
        assert_eq!(Action::new(1, 1).unwrap().index(), 8);
        assert_eq!(Action::new(2, 0), Err(EnvError::InvalidInput(2)));
    }

    #[test]
    fn rng_stream_is_counter_based() {
        let mut a = RngStream::new(7);
        let mut b = RngStream::new(7);
        let xs: Vec<u64> = (0..5).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..5).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
        assert_eq!(a.counter, 5);
        let u = RngStream::new(1).next_f64();
        assert!((0.0..1.0).contains(&u));
    }
}
