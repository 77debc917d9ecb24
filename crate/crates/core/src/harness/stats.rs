use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::HarnessError;
use crate::affect::AffectIndex;
use crate::env::{Action, GameState, RacingEnv, MAX_SCORE, WINDOW_SECONDS};
use crate::explore::reward_similarity;
use crate::persona::PersonaModel;

/// Per-trajectory statistics, always taken from a fresh replay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InGameStatistics {
    pub final_score: u8,
    /// Seconds; `None` if lap 1 was never completed.
    pub lap1_time_s: Option<f64>,
    pub average_speed: f64,
    /// Mean distance to the nearest visible opponent, capped per window.
    pub nearest_car: f64,
    pub off_road_pct: f64,
    pub crash_pct: f64,
    pub length: usize,
}

/// Replays `actions` from `reset(seed)`, returning every post-step state.
pub fn replay(env: &RacingEnv, seed: u64, actions: &[Action]) -> Result<Vec<GameState>, HarnessError> {
    let mut states = env.replay(seed, actions)?;
    states.remove(0);
    Ok(states)
}

pub fn compute_stats(env: &RacingEnv, seed: u64, actions: &[Action]) -> Result<InGameStatistics, HarnessError> {
    let states = replay(env, seed, actions)?;
    Ok(stats_from_states(env, &states))
}

pub fn stats_from_states(env: &RacingEnv, states: &[GameState]) -> InGameStatistics {
    let n = states.len();
    let mean = |f: &dyn Fn(&GameState) -> f64| {
        if n == 0 {
            0.0
        } else {
            states.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let last = states.last();
    InGameStatistics {
        final_score: last.map_or(0, |s| s.score),
        lap1_time_s: last.and_then(|s| s.lap1_windows).map(|w| w as f64 * WINDOW_SECONDS),
        average_speed: mean(&|s| s.player.speed),
        nearest_car: mean(&|s| env.nearest_visible_opponent(s)),
        off_road_pct: 100.0 * mean(&|s| s.player.on_grass as u8 as f64),
        crash_pct: 100.0 * mean(&|s| s.player.crashed_this_window as u8 as f64),
        length: n,
    }
}

/// Per-window `(h_b, h_e)` traces of a replayed trajectory.
pub fn traces(env: &RacingEnv, states: &[GameState], index: &AffectIndex) -> (Vec<f64>, Vec<f64>) {
    let h_b = states.iter().map(|s| s.score as f64 / MAX_SCORE as f64).collect();
    let mut hint = Vec::new();
    let h_e = states
        .iter()
        .map(|s| {
            let nb = index.neighbors_with_hint(&env.features(s), &hint);
            hint = nb.iter().map(|n| n.row).collect();
            index.weighted(&nb)
        })
        .collect();
    (h_b, h_e)
}

/// `(R_b, R_e)` of the full replayed trajectory against `persona`.
pub fn compare_rewards(
    env: &RacingEnv,
    seed: u64,
    actions: &[Action],
    persona: &PersonaModel,
    index: &AffectIndex,
) -> Result<(f64, f64), HarnessError> {
    let states = replay(env, seed, actions)?;
    let (h_b, h_e) = traces(env, &states, index);
    Ok((
        reward_similarity(&h_b, &persona.target_score)?,
        reward_similarity(&h_e, &persona.target_arousal)?,
    ))
}

/// Mean with the half-width of a two-sided 95% Student-t interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    /// `None` with fewer than two values.
    pub half_width: Option<f64>,
    pub n: usize,
}

pub fn mean_ci(values: &[f64]) -> Option<MeanCi> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let half_width = (n >= 2).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("df >= 1")
            .inverse_cdf(0.975);
        t * var.sqrt() / (n as f64).sqrt()
    });
    Some(MeanCi { mean, half_width, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_matches_table_quantile() {
        // t(0.975, df=2) = 4.302653
        let m = mean_ci(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert!((m.half_width.unwrap() - 4.302653 / 3f64.sqrt()).abs() < 1e-5);
        let one = mean_ci(&[5.0]).unwrap();
        assert_eq!((one.mean, one.half_width), (5.0, None));
        assert!(mean_ci(&[]).is_none());
        assert_eq!(mean_ci(&[16.0; 3]).unwrap().half_width, Some(0.0));
    }

    #[test]
    fn stationary_trajectory() {
        let env = RacingEnv::with_default_track();
        let idle = vec![Action::new(0, 0).unwrap(); 40];
        let s = compute_stats(&env, 0, &idle).unwrap();
        assert_eq!((s.final_score, s.average_speed, s.length), (0, 0.0, 40));
        assert_eq!(s.lap1_time_s, None);
        assert_eq!((s.off_road_pct, s.crash_pct), (0.0, 0.0));
    }

    #[test]
    fn empty_trajectory() {
        let env = RacingEnv::with_default_track();
        let s = compute_stats(&env, 0, &[]).unwrap();
        assert_eq!((s.final_score, s.length, s.average_speed), (0, 0, 0.0));
    }
}
