//! Opaque, bit-exact encoding of a [`GameState`].
//!
//! Layout: 4-byte magic, 1-byte version, fixed-order little-endian payload,
//! then an FNV-1a 64 checksum of everything before it.

use super::geometry::Vec2;
use super::state::{CarState, EnvError, GameState, RngStream, OPPONENTS};
use super::track::TrackPos;

const MAGIC: &[u8; 4] = b"GBSN";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Snapshot(Vec<u8>);

impl Snapshot {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self(bytes)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct Writer(Vec<u8>);

impl Writer {
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn i8(&mut self, v: i8) {
        self.0.push(v as u8);
    }
    fn vec2(&mut self, v: Vec2) {
        self.f64(v.x);
        self.f64(v.y);
    }
    fn car(&mut self, c: &CarState) {
        self.vec2(c.position);
        self.f64(c.heading);
        self.f64(c.speed);
        self.i8(c.steer_input);
        self.i8(c.gas_input);
        self.u8(c.on_grass as u8);
        self.u8(c.crashed_this_window as u8);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], EnvError> {
        let end = self.pos + N;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| EnvError::Snapshot("truncated payload".into()))?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice length checked"))
    }
    fn f64(&mut self) -> Result<f64, EnvError> {
        Ok(f64::from_bits(u64::from_le_bytes(self.take()?)))
    }
    fn u64(&mut self) -> Result<u64, EnvError> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32, EnvError> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u8(&mut self) -> Result<u8, EnvError> {
        Ok(self.take::<1>()?[0])
    }
    fn i8(&mut self) -> Result<i8, EnvError> {
        let v = self.u8()? as i8;
        if !(-1..=1).contains(&v) {
            return Err(EnvError::Snapshot(format!("input value {v} out of range")));
        }
        Ok(v)
    }
    fn flag(&mut self) -> Result<bool, EnvError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(EnvError::Snapshot(format!("invalid flag byte {v}"))),
        }
    }
    fn vec2(&mut self) -> Result<Vec2, EnvError> {
        Ok(Vec2::new(self.f64()?, self.f64()?))
    }
    fn car(&mut self) -> Result<CarState, EnvError> {
        Ok(CarState {
            position: self.vec2()?,
            heading: self.f64()?,
            speed: self.f64()?,
            steer_input: self.i8()?,
            gas_input: self.i8()?,
            on_grass: self.flag()?,
            crashed_this_window: self.flag()?,
        })
    }
}

pub fn snapshot(s: &GameState) -> Snapshot {
    let mut w = Writer(Vec::with_capacity(320));
    w.0.extend_from_slice(MAGIC);
    w.u8(VERSION);
    w.car(&s.player);
    for o in &s.opponents {
        w.car(o);
    }
    for &p in &s.opponent_progress {
        w.f64(p);
    }
    for &l in &s.opponent_lane {
        w.f64(l);
    }
    w.u32(s.window_index);
    w.u8(s.lap);
    w.u8(s.score);
    w.u8(s.finished as u8);
    w.u64(s.track.segment as u64);
    w.u64(s.track.piece as u64);
    w.f64(s.track.s);
    w.f64(s.track.offset);
    w.f64(s.track.tangent);
    w.vec2(s.track.foot);
    w.f64(s.prev_speed);
    w.f64(s.secs_since_crash);
    match s.lap1_windows {
        Some(n) => {
            w.u8(1);
            w.u32(n);
        }
        None => {
            w.u8(0);
            w.u32(0);
        }
    }
    w.u64(s.rng_stream.seed);
    w.u64(s.rng_stream.counter);
    let sum = fnv1a(&w.0);
    w.u64(sum);
    Snapshot(w.0)
}

pub fn restore(blob: &Snapshot) -> Result<GameState, EnvError> {
    let bytes = blob.as_bytes();
    if bytes.len() < MAGIC.len() + 1 + 8 {
        return Err(EnvError::Snapshot("blob too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if fnv1a(body) != stored {
        return Err(EnvError::Snapshot("checksum mismatch".into()));
    }
    if &body[..4] != MAGIC {
        return Err(EnvError::Snapshot("bad magic".into()));
    }
    if body[4] != VERSION {
        return Err(EnvError::Snapshot(format!("unsupported version {}", body[4])));
    }
    let mut r = Reader { buf: body, pos: 5 };
    let player = r.car()?;
    let mut opponents = [CarState::default(); OPPONENTS];
    for o in &mut opponents {
        *o = r.car()?;
    }
    let mut opponent_progress = [0.0; OPPONENTS];
    for p in &mut opponent_progress {
        *p = r.f64()?;
    }
    let mut opponent_lane = [0.0; OPPONENTS];
    for l in &mut opponent_lane {
        *l = r.f64()?;
    }
    let window_index = r.u32()?;
    let lap = r.u8()?;
    let score = r.u8()?;
    let finished = r.flag()?;
    let track = TrackPos {
        segment: r.u64()? as usize,
        piece: r.u64()? as usize,
        s: r.f64()?,
        offset: r.f64()?,
        tangent: r.f64()?,
        foot: r.vec2()?,
    };
    let prev_speed = r.f64()?;
    let secs_since_crash = r.f64()?;
    let has_lap1 = r.flag()?;
    let lap1 = r.u32()?;
    let rng_stream = RngStream {
        seed: r.u64()?,
        counter: r.u64()?,
    };
    if r.pos != body.len() {
        return Err(EnvError::Snapshot("trailing bytes".into()));
    }
    if !(1..=2).contains(&lap) || score > super::state::MAX_SCORE {
        return Err(EnvError::Snapshot(format!("lap {lap} / score {score} out of range")));
    }
    Ok(GameState {
        player,
        opponents,
        opponent_progress,
        opponent_lane,
        window_index,
        lap,
        score,
        finished,
        track,
        prev_speed,
        secs_since_crash,
        lap1_windows: has_lap1.then_some(lap1),
        rng_stream,
    })
}
