use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedBucket {
    Slow = 0,
    Fast = 1,
}

/// Rotation buckets: heading error vs. track tangent over [-90, +90) degrees in
/// 30 degree steps.
pub const ROTATION_BUCKETS: u8 = 6;

/// Categorical archive key for a game state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub lap: u8,
    pub sub_segment: u16,
    pub speed_bucket: SpeedBucket,
    pub rotation_bucket: u8,
    pub opponent_proximity: bool,
}

impl CellKey {
    /// Size of the key space for a track with `subsegments` sub-segment ids.
    pub fn key_space(subsegments: usize) -> usize {
        2 * subsegments * 2 * ROTATION_BUCKETS as usize * 2
    }

    /// Key space restricted to lap 2.
    pub fn lap_key_space(subsegments: usize) -> usize {
        Self::key_space(subsegments) / 2
    }

    /// Dense mixed-radix index in `0..key_space(subsegments)`.
    pub fn index(&self, subsegments: usize) -> usize {
        let mut i = (self.lap as usize - 1) * subsegments + self.sub_segment as usize;
        i = i * 2 + self.speed_bucket as usize;
        i = i * ROTATION_BUCKETS as usize + self.rotation_bucket as usize;
        i * 2 + self.opponent_proximity as usize
    }

    pub fn from_index(index: usize, subsegments: usize) -> Self {
        let proximity = index % 2 == 1;
        let mut rest = index / 2;
        let rotation = (rest % ROTATION_BUCKETS as usize) as u8;
        rest /= ROTATION_BUCKETS as usize;
        let speed = if rest % 2 == 1 { SpeedBucket::Fast } else { SpeedBucket::Slow };
        rest /= 2;
        Self {
            lap: (rest / subsegments + 1) as u8,
            sub_segment: (rest % subsegments) as u16,
            speed_bucket: speed,
            rotation_bucket: rotation,
            opponent_proximity: proximity,
        }
    }
}

/// Rotation bucket for a heading error in degrees. A boundary value belongs
/// to the lower bucket; errors outside [-90, 90) clamp to the end buckets.
pub fn rotation_bucket(heading_error_deg: f64) -> u8 {
    let b = ((heading_error_deg + 90.0) / 30.0).ceil() - 1.0;
    b.clamp(0.0, (ROTATION_BUCKETS - 1) as f64) as u8
}
