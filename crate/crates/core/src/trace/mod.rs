//! Play sessions: synthetic generation, arousal annotation, normalization,
//! truncation and CSV persistence.

pub mod arousal;
pub mod csvio;
pub mod driver;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use arousal::{annotate_arousal, normalize_trace, AnnotatorProfile, StimulusWeights};
pub use csvio::{load_sessions, save_sessions};
pub use driver::{DriverProfile, ScriptedDriver};

use crate::env::{feature, Action, FeatureVector, RacingEnv, CHECKPOINTS_PER_LAP, MAX_WINDOWS};
use crate::tier::Tier;

pub const GENERATOR_VERSION: &str = "goblend-synth/1";

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("session {0} has no windows")]
    EmptySession(String),
    #[error("cannot normalize an empty trace")]
    EmptyTrace,
    #[error("non-finite {what} at row {row}")]
    NonFinite { what: String, row: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("session {session}: {message}")]
    Length { session: String, message: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub features: FeatureVector,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionMeta {
    pub seed: u64,
    pub generator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaySession {
    pub session_id: String,
    /// Ground-truth tier for synthetic sessions.
    pub tier: Option<Tier>,
    pub windows: Vec<WindowRecord>,
    /// Per-window arousal, parallel to `windows`.
    pub arousal: Vec<f64>,
    pub meta: SessionMeta,
}

impl PlaySession {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn final_score(&self) -> f64 {
        self.windows.last().map_or(0.0, |w| w.features.get(feature::SCORE))
    }

    /// Score after window `i`, held at the final value past the end.
    pub fn score_at(&self, i: usize) -> f64 {
        match self.windows.get(i) {
            Some(w) => w.features.get(feature::SCORE),
            None => self.final_score(),
        }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.windows.len() != self.arousal.len() {
            return Err(TraceError::Length {
                session: self.session_id.clone(),
                message: format!(
                    "{} windows but {} arousal values",
                    self.windows.len(),
                    self.arousal.len()
                ),
            });
        }
        if self.windows.len() > MAX_WINDOWS as usize {
            return Err(TraceError::Length {
                session: self.session_id.clone(),
                message: format!("{} windows exceeds {MAX_WINDOWS}", self.windows.len()),
            });
        }
        Ok(())
    }
}

/// Removes every window after the one in which `laps` laps were completed.
/// Sessions that never complete them are returned unchanged.
pub fn truncate_to_laps(session: &PlaySession, laps: u8) -> Result<PlaySession, TraceError> {
    if !(1..=2).contains(&laps) {
        return Err(TraceError::Config(format!("laps must be 1 or 2, got {laps}")));
    }
    let target = (laps as usize * CHECKPOINTS_PER_LAP) as f64;
    let mut out = session.clone();
    if let Some(i) = session
        .windows
        .iter()
        .position(|w| w.features.get(feature::SCORE) >= target)
    {
        out.windows.truncate(i + 1);
        out.arousal.truncate(i + 1);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub sessions: Vec<PlaySession>,
}

impl Dataset {
    pub fn new(sessions: Vec<PlaySession>) -> Self {
        Self { sessions }
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&PlaySession> {
        self.sessions.iter().find(|s| s.session_id == id)
    }

    /// Normalized frequency of each (steer, gas) combination over all windows.
    pub fn action_frequencies(&self) -> [f64; Action::COUNT] {
        action_frequencies(self.sessions.iter())
    }

    pub fn total_windows(&self) -> usize {
        self.sessions.iter().map(|s| s.len()).sum()
    }
}

pub fn action_frequencies<'a>(
    sessions: impl Iterator<Item = &'a PlaySession>,
) -> [f64; Action::COUNT] {
    let mut counts = [0u64; Action::COUNT];
    for s in sessions {
        for w in &s.windows {
            counts[w.action.index()] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let mut freq = [0.0; Action::COUNT];
    if total == 0 {
        return freq;
    }
    for (f, c) in freq.iter_mut().zip(counts) {
        *f = c as f64 / total as f64;
    }
    freq
}

/// Parameters of the synthetic cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    /// Sessions per tier.
    pub cohort: BTreeMap<Tier, usize>,
    pub drivers: BTreeMap<Tier, DriverProfile>,
    pub annotator: AnnotatorProfile,
    /// Relative per-session spread of annotator gain and drift.
    pub annotator_jitter: f64,
    pub stimulus: StimulusWeights,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 2022,
            cohort: BTreeMap::from([
                (Tier::Expert, 27),
                (Tier::Advanced, 32),
                (Tier::Intermediate, 19),
                (Tier::Beginner, 30),
            ]),
            drivers: Tier::ALL
                .into_iter()
                .map(|t| (t, DriverProfile::for_tier(t)))
                .collect(),
            annotator: AnnotatorProfile::default(),
            annotator_jitter: 0.3,
            stimulus: StimulusWeights::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn driver(&self, tier: Tier) -> DriverProfile {
        self.drivers
            .get(&tier)
            .copied()
            .unwrap_or_else(|| DriverProfile::for_tier(tier))
    }
}

fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Plays one scripted session of `tier` (without arousal; `arousal` is all 0.5).
pub fn drive_session(
    env: &RacingEnv,
    profile: &DriverProfile,
    tier: Option<Tier>,
    session_id: String,
    seed: u64,
) -> PlaySession {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut driver = ScriptedDriver::new(profile.jittered(&mut rng));
    let mut state = env.reset(seed);
    let mut windows = Vec::new();
    while !state.finished {
        let action = driver.decide(env, &state, &mut rng);
        state = env.step(&state, action).expect("episode not finished");
        windows.push(WindowRecord {
            features: env.features(&state),
            action,
        });
    }
    let n = windows.len();
    PlaySession {
        session_id,
        tier,
        windows,
        arousal: vec![0.5; n],
        meta: SessionMeta {
            seed,
            generator: GENERATOR_VERSION.to_string(),
        },
    }
}

/// A fully processed synthetic session: driven, annotated, normalized and
/// truncated to two laps.
pub fn generate_session(
    env: &RacingEnv,
    config: &GeneratorConfig,
    tier: Tier,
    session_id: String,
    seed: u64,
) -> Result<PlaySession, TraceError> {
    let mut session = drive_session(env, &config.driver(tier), Some(tier), session_id, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xA11CE));
    let mut profile = config.annotator;
    let j = config.annotator_jitter;
    profile.gain *= 1.0 + j * rand::Rng::gen_range(&mut rng, -1.0..1.0);
    profile.drift *= 1.0 + j * rand::Rng::gen_range(&mut rng, -1.0..1.0);
    let raw = annotate_arousal(&session, &profile, &config.stimulus, mix_seed(seed, 0xB0B))?;
    session.arousal = normalize_trace(&raw)?;
    truncate_to_laps(&session, 2)
}

/// The whole cohort, tiers in rank order, session ids `s000`, `s001`, ...
pub fn generate_cohort(env: &RacingEnv, config: &GeneratorConfig) -> Result<Dataset, TraceError> {
    let mut sessions = Vec::new();
    let mut n = 0u64;
    for tier in Tier::BY_RANK {
        let count = config.cohort.get(&tier).copied().unwrap_or(0);
        for _ in 0..count {
            let seed = mix_seed(config.seed, n);
            sessions.push(generate_session(env, config, tier, format!("s{n:03}"), seed)?);
            n += 1;
        }
    }
    Ok(Dataset::new(sessions))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(scores: &[f64]) -> PlaySession {
        let windows = scores
            .iter()
            .map(|&s| {
                let mut f = [0.0; crate::env::FEATURE_COUNT];
                f[feature::SCORE] = s;
                WindowRecord {
                    features: FeatureVector(f),
                    action: Action::new(0, 1).unwrap(),
                }
            })
            .collect();
        PlaySession {
            session_id: "f".into(),
            tier: None,
            windows,
            arousal: (0..scores.len()).map(|i| i as f64 / scores.len() as f64).collect(),
            meta: SessionMeta::default(),
        }
    }

    #[test]
    fn truncation_at_lap_two() {
        // two laps completed in window index 199 -> 200 windows kept
        let mut scores: Vec<f64> = (0..300).map(|i| (i as f64 / 12.5).floor().min(16.0)).collect();
        for (i, s) in scores.iter_mut().enumerate() {
            *s = if i < 199 { (*s).min(15.0) } else { 16.0 };
        }
        let t = truncate_to_laps(&fixture(&scores), 2).unwrap();
        assert_eq!(t.len(), 200);
        assert_eq!(t.arousal.len(), 200);
        let t1 = truncate_to_laps(&fixture(&scores), 1).unwrap();
        assert_eq!(t1.len(), scores.iter().position(|&s| s >= 8.0).unwrap() + 1);
    }

    #[test]
    fn unfinished_session_unchanged() {
        let s = fixture(&vec![3.0; 480]);
        let t = truncate_to_laps(&s, 2).unwrap();
        assert_eq!(t, s);
        assert!(truncate_to_laps(&s, 3).is_err());
    }

    #[test]
    fn generated_session_is_deterministic() {
        let env = RacingEnv::with_default_track();
        let cfg = GeneratorConfig::default();
        let a = generate_session(&env, &cfg, Tier::Advanced, "a".into(), 17).unwrap();
        let b = generate_session(&env, &cfg, Tier::Advanced, "a".into(), 17).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert!(a.arousal.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn frequencies_sum_to_one() {
        let env = RacingEnv::with_default_track();
        let cfg = GeneratorConfig::default();
        let s = generate_session(&env, &cfg, Tier::Beginner, "b".into(), 3).unwrap();
        let f = Dataset::new(vec![s]).action_frequencies();
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
