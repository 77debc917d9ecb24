//! Synthetic arousal annotation.
//!
//! The annotator integrates a stimulus built from speed, opponent proximity
//! and a decaying crash impulse, adds bias, a linear drift and Gaussian noise,
//! then low-pass filters the result. The raw trace is unbounded; sessions are
//! min-max normalized afterwards.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{PlaySession, TraceError};
use crate::env::{feature, WINDOW_SECONDS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub gain: f64,
    pub bias: f64,
    /// Time constant of the exponential smoother, seconds (> 0).
    pub smoothing_s: f64,
    /// Standard deviation of the per-window noise (>= 0).
    pub noise: f64,
    /// Linear drift per second.
    pub drift: f64,
}

impl Default for AnnotatorProfile {
    fn default() -> Self {
        Self {
            gain: 1.0,
            bias: 0.0,
            smoothing_s: 1.5,
            noise: 0.15,
            drift: 0.01,
        }
    }
}

impl AnnotatorProfile {
    pub fn validate(&self) -> Result<(), TraceError> {
        if !(self.smoothing_s > 0.0) {
            return Err(TraceError::Config("annotator smoothing constant must be > 0".into()));
        }
        if !(self.noise >= 0.0) {
            return Err(TraceError::Config("annotator noise amplitude must be >= 0".into()));
        }
        Ok(())
    }
}

/// How the stimulus is assembled from per-window features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StimulusWeights {
    pub speed: f64,
    /// Speed that maps to a normalized speed of 1.
    pub speed_scale: f64,
    pub proximity: f64,
    /// Distance scale of the `exp(-d / scale)` proximity term, meters.
    pub proximity_scale: f64,
    pub crash: f64,
    /// Decay time constant of the crash impulse, seconds.
    pub crash_decay_s: f64,
}

impl Default for StimulusWeights {
    fn default() -> Self {
        Self {
            speed: 1.0,
            speed_scale: 32.0,
            proximity: 0.6,
            proximity_scale: 25.0,
            crash: 1.2,
            crash_decay_s: 2.0,
        }
    }
}

pub fn annotate_arousal(
    session: &PlaySession,
    profile: &AnnotatorProfile,
    weights: &StimulusWeights,
    seed: u64,
) -> Result<Vec<f64>, TraceError> {
    if session.windows.is_empty() {
        return Err(TraceError::EmptySession(session.session_id.clone()));
    }
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = 1.0 - (-WINDOW_SECONDS / profile.smoothing_s).exp();
    let impulse_decay = (-WINDOW_SECONDS / weights.crash_decay_s).exp();
    let mut impulse = 0.0;
    let mut smoothed: Option<f64> = None;
    let mut out = Vec::with_capacity(session.windows.len());
    for (t, w) in session.windows.iter().enumerate() {
        let f = &w.features;
        impulse = impulse * impulse_decay + f.get(feature::CRASHED);
        let speed = f.get(feature::SPEED) / weights.speed_scale;
        let proximity = (-f.get(feature::NEAREST_VISIBLE) / weights.proximity_scale).exp();
        let stimulus =
            weights.speed * speed + weights.proximity * proximity + weights.crash * impulse;
        let z: f64 = StandardNormal.sample(&mut rng);
        let raw = profile.gain * stimulus
            + profile.bias
            + profile.drift * (t as f64 * WINDOW_SECONDS)
            + profile.noise * z;
        let y = match smoothed {
            None => raw,
            Some(prev) => prev + alpha * (raw - prev),
        };
        smoothed = Some(y);
        out.push(y);
    }
    Ok(out)
}

/// Min-max scaling to [0, 1]; a constant trace maps to all 0.5.
pub fn normalize_trace(trace: &[f64]) -> Result<Vec<f64>, TraceError> {
    if trace.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    if let Some(i) = trace.iter().position(|v| !v.is_finite()) {
        return Err(TraceError::NonFinite { what: "trace value".into(), row: i });
    }
    let min = trace.iter().copied().fold(f64::INFINITY, f64::min);
    let max = trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range == 0.0 {
        return Ok(vec![0.5; trace.len()]);
    }
    Ok(trace
        .iter()
        .map(|&v| {
            if v == max {
                1.0
            } else {
                ((v - min) / range).clamp(0.0, 1.0)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, FeatureVector, FEATURE_COUNT};
    use crate::trace::{SessionMeta, WindowRecord};
    use proptest::prelude::*;

    fn session_with(features: Vec<FeatureVector>) -> PlaySession {
        let n = features.len();
        PlaySession {
            session_id: "t".into(),
            tier: None,
            windows: features
                .into_iter()
                .map(|f| WindowRecord {
                    features: f,
                    action: Action::new(0, 1).unwrap(),
                })
                .collect(),
            arousal: vec![0.5; n],
            meta: SessionMeta::default(),
        }
    }

    #[test]
    fn min_max_examples() {
        assert_eq!(normalize_trace(&[2.0, 4.0, 6.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_trace(&[5.0, 5.0, 5.0]).unwrap(), vec![0.5, 0.5, 0.5]);
        assert_eq!(normalize_trace(&[]), Err(TraceError::EmptyTrace));
        assert!(normalize_trace(&[1.0, f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn normalization_range_and_idempotence(xs in prop::collection::vec(-1e6f64..1e6, 1..200)) {
            let n = normalize_trace(&xs).unwrap();
            prop_assert!(n.iter().all(|v| (0.0..=1.0).contains(v)));
            let constant = xs.iter().all(|&v| v == xs[0]);
            if !constant {
                prop_assert_eq!(n.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
                prop_assert_eq!(n.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);
            }
            prop_assert_eq!(normalize_trace(&n).unwrap(), n);
        }
    }

    #[test]
    fn zero_gain_zero_noise_is_constant() {
        let f = FeatureVector([1.0; FEATURE_COUNT]);
        let s = session_with(vec![f; 40]);
        let profile = AnnotatorProfile {
            gain: 0.0,
            bias: 0.3,
            smoothing_s: 1.0,
            noise: 0.0,
            drift: 0.0,
        };
        let a = annotate_arousal(&s, &profile, &StimulusWeights::default(), 1).unwrap();
        assert!(a.iter().all(|&v| v == 0.3));
    }

    #[test]
    fn crash_produces_local_peak() {
        let mut calm = [0.0; FEATURE_COUNT];
        calm[feature::NEAREST_VISIBLE] = 500.0;
        calm[feature::SPEED] = 10.0;
        let mut crash = calm;
        crash[feature::CRASHED] = 1.0;
        let w = 20;
        let mut fs = vec![FeatureVector(calm); 60];
        fs[w] = FeatureVector(crash);
        let s = session_with(fs);
        let profile = AnnotatorProfile {
            gain: 1.0,
            bias: 0.0,
            smoothing_s: 0.5,
            noise: 0.0,
            drift: 0.0,
        };
        let weights = StimulusWeights {
            speed: 0.0,
            proximity: 0.0,
            crash: 5.0,
            crash_decay_s: 1.5,
            ..StimulusWeights::default()
        };
        let a = annotate_arousal(&s, &profile, &weights, 9).unwrap();
        let (peak, _) = a
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .unwrap();
        assert!((w..=w + 8).contains(&peak), "peak at {peak}");
        assert!(a[peak] > a[peak - 1] && a[peak] >= a[peak + 1]);
    }

    #[test]
    fn annotation_is_deterministic() {
        let s = session_with(vec![FeatureVector([2.0; FEATURE_COUNT]); 30]);
        let p = AnnotatorProfile::default();
        let w = StimulusWeights::default();
        assert_eq!(
            annotate_arousal(&s, &p, &w, 4).unwrap(),
            annotate_arousal(&s, &p, &w, 4).unwrap()
        );
        assert!(annotate_arousal(&session_with(vec![]), &p, &w, 4).is_err());
    }
}
