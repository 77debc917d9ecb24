//! Track layouts: a closed loop of centerline segments with checkpoint gates.
//!
//! Track files are TOML with a `format`/`version` header, scalar keys, and
//! polyline arrays. Each `[[segment]]` holds the centerline points of one
//! segment; consecutive segments share their boundary point and the last
//! segment ends where the first begins.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::{wrap_positive, wrap_signed, Aabb, LoopPolyline, Vec2};

pub const TRACK_FORMAT: &str = "goblend-track";
pub const TRACK_VERSION: u32 = 1;
pub const CHECKPOINTS_PER_LAP: usize = 8;
/// Sub-segments per segment: on-road left/right, off-road left/right.
pub const SUBSEGMENTS_PER_SEGMENT: usize = 4;

const CLOSURE_TOLERANCE: f64 = 1e-3;

const DEFAULT_TRACK: &str = include_str!("../../assets/default_track.toml");

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("cannot read track file: {0}")]
    Io(#[from] std::io::Error),
    #[error("track parse error: {0}")]
    Parse(String),
    #[error("track validation error: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentShape {
    Straight,
    HalfCurve,
    FullCurve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubSegmentKind {
    OnRoadLeft = 0,
    OnRoadRight = 1,
    OffRoadLeft = 2,
    OffRoadRight = 3,
}

impl SubSegmentKind {
    pub fn from_offset(offset: f64, road_half_width: f64) -> Self {
        let left = offset >= 0.0;
        let on_road = offset.abs() <= road_half_width;
        match (on_road, left) {
            (true, true) => Self::OnRoadLeft,
            (true, false) => Self::OnRoadRight,
            (false, true) => Self::OffRoadLeft,
            (false, false) => Self::OffRoadRight,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub shape: SegmentShape,
    pub points: Vec<Vec2>,
    pub length: f64,
    /// Arc length of the segment start along the loop.
    pub start_s: f64,
    /// Mean absolute curvature (total turning / length), 1/m.
    pub curvature: f64,
    /// Signed total turning, radians; positive turns left.
    pub turn: f64,
    bbox: Aabb,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    segment: usize,
    a: Vec2,
    dir: Vec2,
    len: f64,
    s0: f64,
}

/// Projection of a point onto the centerline.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackPos {
    pub segment: usize,
    pub piece: usize,
    /// Arc length of the foot point along the loop, in [0, length).
    pub s: f64,
    /// Signed lateral offset, positive to the left of the driving direction.
    pub offset: f64,
    /// Centerline heading at the foot point.
    pub tangent: f64,
    /// Nearest centerline point.
    pub foot: Vec2,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct TrackFile {
    format: String,
    version: u32,
    name: String,
    road_half_width: f64,
    barrier_half_width: f64,
    bounds: [f64; 4],
    checkpoints: Vec<usize>,
    #[serde(default)]
    opponent_waypoints: Option<Vec<[f64; 2]>>,
    segment: Vec<SegmentFile>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct SegmentFile {
    shape: SegmentShape,
    points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackLayout {
    pub name: String,
    pub segments: Vec<Segment>,
    /// Segment indices whose end point is a checkpoint gate, in driving order.
    /// The last one is the start/finish line.
    pub checkpoints: Vec<usize>,
    pub opponent_waypoints: LoopPolyline,
    pub bounds: Aabb,
    pub road_half_width: f64,
    pub barrier_half_width: f64,
    pieces: Vec<Piece>,
    gate_s: Vec<f64>,
    length: f64,
}

impl TrackLayout {
    /// The bundled 19-segment circuit.
    pub fn default_track() -> Self {
        Self::from_toml_str(DEFAULT_TRACK).expect("bundled track is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrackError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, TrackError> {
        let file: TrackFile = toml::from_str(text).map_err(|e| TrackError::Parse(e.to_string()))?;
        if file.format != TRACK_FORMAT {
            return Err(TrackError::Parse(format!(
                "unexpected format {:?}, expected {TRACK_FORMAT:?}",
                file.format
            )));
        }
        if file.version != TRACK_VERSION {
            return Err(TrackError::Parse(format!(
                "unsupported track version {}",
                file.version
            )));
        }
        Self::build(file)
    }

    fn build(file: TrackFile) -> Result<Self, TrackError> {
        let invalid = |msg: String| Err(TrackError::Validation(msg));
        if !(file.road_half_width > 0.0) || !(file.barrier_half_width > file.road_half_width) {
            return invalid("need 0 < road_half_width < barrier_half_width".into());
        }
        if file.segment.is_empty() {
            return invalid("track has no segments".into());
        }
        let bounds = Aabb {
            min: Vec2::new(file.bounds[0], file.bounds[1]),
            max: Vec2::new(file.bounds[2], file.bounds[3]),
        };
        if !(bounds.min.x < bounds.max.x && bounds.min.y < bounds.max.y) {
            return invalid("bounds must be [min_x, min_y, max_x, max_y]".into());
        }

        let mut segments = Vec::with_capacity(file.segment.len());
        let mut pieces = Vec::new();
        let mut s = 0.0;
        for (idx, seg) in file.segment.iter().enumerate() {
            if seg.points.len() < 2 {
                return invalid(format!("segment {idx} needs at least two points"));
            }
            let points: Vec<Vec2> = seg.points.iter().map(|p| Vec2::new(p[0], p[1])).collect();
            if points.iter().any(|p| !p.is_finite()) {
                return Err(TrackError::Parse(format!("segment {idx} has non-finite points")));
            }
            if let Some(p) = points.iter().find(|p| !bounds.contains(**p)) {
                return invalid(format!("segment {idx} point ({}, {}) outside bounds", p.x, p.y));
            }
            let start_s = s;
            let mut turning = 0.0;
            let mut turn = 0.0;
            let mut prev_dir: Option<Vec2> = None;
            for w in points.windows(2) {
                let d = w[1] - w[0];
                let len = d.norm();
                if len <= 1e-9 {
                    return invalid(format!("segment {idx} has a zero-length piece"));
                }
                let dir = d * (1.0 / len);
                if let Some(pd) = prev_dir {
                    let a = pd.cross(dir).atan2(pd.dot(dir));
                    turning += a.abs();
                    turn += a;
                }
                prev_dir = Some(dir);
                pieces.push(Piece {
                    segment: idx,
                    a: w[0],
                    dir,
                    len,
                    s0: s,
                });
                s += len;
            }
            let length = s - start_s;
            segments.push(Segment {
                shape: seg.shape,
                bbox: Aabb::from_points(&points),
                points,
                length,
                start_s,
                curvature: turning / length,
                turn,
            });
        }

        let n = segments.len();
        for i in 0..n {
            let end = *segments[i].points.last().unwrap();
            let next_start = segments[(i + 1) % n].points[0];
            if end.dist(next_start) > CLOSURE_TOLERANCE {
                return if i + 1 == n {
                    invalid("centerline does not form a closed loop".into())
                } else {
                    invalid(format!("segments {i} and {} are not connected", i + 1))
                };
            }
        }
        if n < 3 {
            return invalid("a closed loop needs at least three segments".into());
        }

        if file.checkpoints.len() != CHECKPOINTS_PER_LAP {
            return invalid(format!(
                "expected {CHECKPOINTS_PER_LAP} checkpoints per lap, found {}",
                file.checkpoints.len()
            ));
        }
        if file.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("checkpoints must be strictly increasing".into());
        }
        if *file.checkpoints.last().unwrap() != n - 1 {
            return invalid("last checkpoint must be the final segment (finish line)".into());
        }
        let length = s;
        let gate_s = file
            .checkpoints
            .iter()
            .map(|&c| wrap_positive(segments[c].start_s + segments[c].length, length))
            .collect();

        let waypoints: Vec<Vec2> = match &file.opponent_waypoints {
            Some(w) if w.len() >= 3 => w.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
            Some(_) => return invalid("opponent_waypoints needs at least three points".into()),
            None => pieces.iter().map(|p| p.a).collect(),
        };

        Ok(Self {
            name: file.name,
            segments,
            checkpoints: file.checkpoints,
            opponent_waypoints: LoopPolyline::new(waypoints),
            bounds,
            road_half_width: file.road_half_width,
            barrier_half_width: file.barrier_half_width,
            pieces,
            gate_s,
            length,
        })
    }

    /// Centerline length of one lap.
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    /// Number of sub-segment ids (`S`).
    pub fn subsegment_count(&self) -> usize {
        self.segments.len() * SUBSEGMENTS_PER_SEGMENT
    }

    pub fn subsegment_id(&self, segment: usize, offset: f64) -> u16 {
        (segment * SUBSEGMENTS_PER_SEGMENT
            + SubSegmentKind::from_offset(offset, self.road_half_width) as usize) as u16
    }

    /// Arc-length position of checkpoint gate `i` (0-based within a lap).
    pub fn gate_s(&self, i: usize) -> f64 {
        self.gate_s[i]
    }

    /// Nearest centerline point. Ties resolve to the lowest piece index.
    pub fn project(&self, p: Vec2) -> TrackPos {
        let mut best_d2 = f64::INFINITY;
        let mut best = 0usize;
        let mut best_t = 0.0;
        let mut idx = 0usize;
        for seg in &self.segments {
            let count = seg.points.len() - 1;
            if seg.bbox.dist_sq(p) > best_d2 {
                idx += count;
                continue;
            }
            for piece in &self.pieces[idx..idx + count] {
                let t = (p - piece.a).dot(piece.dir).clamp(0.0, piece.len);
                let q = piece.a + piece.dir * t;
                let d2 = (p - q).norm_sq();
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = idx;
                    best_t = t;
                }
                idx += 1;
            }
        }
        let piece = &self.pieces[best];
        let q = piece.a + piece.dir * best_t;
        let side = piece.dir.cross(p - q);
        let dist = best_d2.sqrt();
        TrackPos {
            segment: piece.segment,
            piece: best,
            s: wrap_positive(piece.s0 + best_t, self.length),
            offset: if side < 0.0 { -dist } else { dist },
            tangent: piece.dir.angle(),
            foot: q,
        }
    }

    fn piece_at(&self, s: f64) -> &Piece {
        let s = wrap_positive(s, self.length);
        let i = match self
            .pieces
            .binary_search_by(|p| p.s0.partial_cmp(&s).expect("finite arc length"))
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        &self.pieces[i]
    }

    /// Centerline point at arc length `s`, shifted `offset` meters to the left.
    pub fn point_at(&self, s: f64, offset: f64) -> Vec2 {
        let s = wrap_positive(s, self.length);
        let p = self.piece_at(s);
        p.a + p.dir * (s - p.s0).min(p.len) + p.dir.left() * offset
    }

    pub fn tangent_at(&self, s: f64) -> f64 {
        self.piece_at(s).dir.angle()
    }

    pub fn segment_at(&self, s: f64) -> usize {
        self.piece_at(s).segment
    }

    /// Forward/backward arc-length difference on the loop, in (-L/2, L/2].
    pub fn arc_delta(&self, from: f64, to: f64) -> f64 {
        wrap_signed(to - from, self.length)
    }

    /// Inner and outer road edges plus barrier lines, for rendering.
    pub fn edge_polylines(&self, offset: f64) -> Vec<Vec2> {
        let mut out = Vec::with_capacity(self.pieces.len());
        for (i, p) in self.pieces.iter().enumerate() {
            let prev = &self.pieces[(i + self.pieces.len() - 1) % self.pieces.len()];
            let n = (p.dir.left() + prev.dir.left()) * 0.5;
            let len = n.norm().max(1e-9);
            out.push(p.a + n * (offset / len));
        }
        out
    }

    pub fn centerline(&self) -> Vec<Vec2> {
        self.pieces.iter().map(|p| p.a).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_track(closed: bool) -> String {
        let last = if closed { "[0.0, 0.0]" } else { "[0.0, 5.0]" };
        format!(
            r#"
format = "goblend-track"
version = 1
name = "square"
road_half_width = 2.0
barrier_half_width = 4.0
bounds = [-10.0, -10.0, 110.0, 110.0]
checkpoints = [0, 1, 2, 3, 4, 5, 6, 7]

[[segment]]
shape = "straight"
points = [[0.0, 0.0], [50.0, 0.0]]
[[segment]]
shape = "straight"
points = [[50.0, 0.0], [100.0, 0.0]]
[[segment]]
shape = "full-curve"
points = [[100.0, 0.0], [100.0, 50.0]]
[[segment]]
shape = "straight"
points = [[100.0, 50.0], [100.0, 100.0]]
[[segment]]
shape = "full-curve"
points = [[100.0, 100.0], [50.0, 100.0]]
[[segment]]
shape = "straight"
points = [[50.0, 100.0], [0.0, 100.0]]
[[segment]]
shape = "full-curve"
points = [[0.0, 100.0], [0.0, 50.0]]
[[segment]]
shape = "straight"
points = [[0.0, 50.0], {last}]
"#
        )
    }

    #[test]
    fn default_track_structure() {
        let t = TrackLayout::default_track();
        assert_eq!(t.segment_count(), 19);
        assert_eq!(t.subsegment_count(), 76);
        assert_eq!(t.checkpoints.len(), 8);
        assert!((t.length() - 698.45).abs() < 0.1);
        let shapes = t.segments.iter().filter(|s| s.shape == SegmentShape::FullCurve).count();
        assert_eq!(shapes, 2);
    }

    #[test]
    fn small_square_loads() {
        let t = TrackLayout::from_toml_str(&square_track(true)).unwrap();
        assert_eq!(t.length(), 400.0);
        assert_eq!(t.gate_s(0), 50.0);
        assert_eq!(t.gate_s(7), 0.0);
        let tp = t.project(Vec2::new(25.0, 1.5));
        assert_eq!(tp.segment, 0);
        assert_eq!(tp.offset, 1.5);
        assert_eq!(tp.s, 25.0);
        let tp = t.project(Vec2::new(101.0, 25.0));
        assert_eq!(tp.segment, 2);
        assert_eq!(tp.offset, -1.0);
    }

    #[test]
    fn open_loop_rejected() {
        let err = TrackLayout::from_toml_str(&square_track(false)).unwrap_err();
        assert!(matches!(err, TrackError::Validation(_)), "{err}");
    }

    #[test]
    fn single_unclosed_segment_rejected() {
        let text = r#"
format = "goblend-track"
version = 1
name = "stub"
road_half_width = 2.0
barrier_half_width = 4.0
bounds = [-10.0, -10.0, 110.0, 110.0]
checkpoints = [0, 0, 0, 0, 0, 0, 0, 0]
[[segment]]
shape = "straight"
points = [[0.0, 0.0], [50.0, 0.0]]
"#;
        assert!(matches!(
            TrackLayout::from_toml_str(text),
            Err(TrackError::Validation(_))
        ));
    }

    #[test]
    fn malformed_geometry_is_parse_error() {
        let text = square_track(true).replace("[[0.0, 0.0], [50.0, 0.0]]", "[[0.0], [50.0, 0.0]]");
        assert!(matches!(
            TrackLayout::from_toml_str(&text),
            Err(TrackError::Parse(_))
        ));
        assert!(matches!(
            TrackLayout::from_toml_str("format = 3"),
            Err(TrackError::Parse(_))
        ));
    }

    #[test]
    fn every_centerline_point_maps_to_its_segment() {
        let t = TrackLayout::default_track();
        for (i, seg) in t.segments.iter().enumerate() {
            for w in seg.points.windows(2) {
                let mid = (w[0] + w[1]) * 0.5;
                let tp = t.project(mid);
                assert_eq!(tp.segment, i);
                assert!(tp.offset.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn point_at_round_trips_through_projection() {
        let t = TrackLayout::default_track();
        let mut s = 0.5;
        while s < t.length() {
            for off in [-10.0, -3.0, 0.0, 4.0, 12.0] {
                let p = t.point_at(s, off);
                let tp = t.project(p);
                assert!(t.arc_delta(s, tp.s).abs() < 2.0, "s={s} off={off} got {}", tp.s);
                assert!((tp.offset - off).abs() < 0.5, "s={s} off={off} got {}", tp.offset);
            }
            s += 7.3;
        }
    }
}
