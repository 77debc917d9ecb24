//! Session aggregation, clustering into personas and persona artifacts.

pub mod ward;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ward::{ward_cluster, Dendrogram, Merge};

use crate::env::{feature, Action, MAX_SCORE, MAX_WINDOWS};
use crate::tier::Tier;
use crate::trace::{action_frequencies, Dataset, PlaySession};

#[derive(Debug, Error, PartialEq)]
pub enum PersonaError {
    #[error("session {0} has no windows")]
    EmptySession(String),
    #[error("clustering needs at least 2 sessions, got {0}")]
    TooFewSessions(usize),
    #[error("row {row} has {found} columns, expected {expected}")]
    Dimension { row: usize, expected: usize, found: usize },
    #[error("non-finite value in row {0}")]
    NonFinite(usize),
    #[error("cut produced {0} clusters; persona labeling needs exactly 4 (adjust the threshold)")]
    ClusterCount(usize),
    #[error("cluster threshold must be > 0, got {0}")]
    Threshold(f64),
    #[error("no persona labeled {0}")]
    MissingPersona(Tier),
    #[error("unknown session id {0}")]
    UnknownSession(String),
    #[error("{0}")]
    Io(String),
}

pub const AGGREGATE_COLUMNS: [&str; 9] = [
    "max_score",
    "mean_speed",
    "mean_abs_lateral_offset",
    "mean_abs_heading_error",
    "mean_abs_speed_delta",
    "mean_nearest_opponent",
    "offroad_windows",
    "crash_windows",
    "length",
];

/// Per-session summary before standardization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateVector(pub [f64; 9]);

pub fn aggregate(session: &PlaySession) -> Result<AggregateVector, PersonaError> {
    if session.windows.is_empty() {
        return Err(PersonaError::EmptySession(session.session_id.clone()));
    }
    let n = session.windows.len() as f64;
    let mut v = [0.0; 9];
    let mut max_score = f64::NEG_INFINITY;
    for w in &session.windows {
        let f = &w.features;
        max_score = max_score.max(f.get(feature::SCORE));
        v[1] += f.get(feature::SPEED);
        v[2] += f.get(feature::LATERAL_OFFSET).abs();
        v[3] += f.get(feature::HEADING_ERROR).abs();
        v[4] += f.get(feature::SPEED_DELTA).abs();
        let nearest = (0..3)
            .map(|k| f.get(feature::OPP_DIST + k))
            .fold(f64::INFINITY, f64::min);
        v[5] += nearest;
        v[6] += (f.get(feature::ON_GRASS) > 0.0) as u8 as f64;
        v[7] += (f.get(feature::CRASHED) > 0.0) as u8 as f64;
    }
    v[0] = max_score;
    for x in &mut v[1..6] {
        *x /= n;
    }
    v[8] = n;
    Ok(AggregateVector(v))
}

/// Column z-scores with population standard deviation; constant columns map to 0.
pub fn standardize(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if rows.is_empty() {
        return Vec::new();
    }
    let n = rows.len() as f64;
    let dim = rows[0].len();
    let mut out = rows.to_vec();
    for k in 0..dim {
        let mean = rows.iter().map(|r| r[k]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for r in &mut out {
            r[k] = if sd > 0.0 { (r[k] - mean) / sd } else { 0.0 };
        }
    }
    out
}

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len() as u64;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sa: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sb: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sa * sb / total;
    let max = (sa + sb) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaModel {
    pub label: Tier,
    pub members: Vec<String>,
    /// Mean normalized score per window, length 480.
    pub target_score: Vec<f64>,
    /// Mean arousal per window, length 480.
    pub target_arousal: Vec<f64>,
    pub action_frequencies: [f64; Action::COUNT],
    pub member_count: usize,
    pub mean_final_score: f64,
    pub mean_length: f64,
}

/// Averages member traces over the full 480-window grid, holding members
/// that already finished at their final value.
pub fn build_persona(label: Tier, members: &[&PlaySession]) -> Result<PersonaModel, PersonaError> {
    if members.is_empty() {
        return Err(PersonaError::TooFewSessions(0));
    }
    if let Some(s) = members.iter().find(|s| s.windows.is_empty()) {
        return Err(PersonaError::EmptySession(s.session_id.clone()));
    }
    let n = members.len() as f64;
    let len = MAX_WINDOWS as usize;
    let mut score = vec![0.0; len];
    let mut arousal = vec![0.0; len];
    for i in 0..len {
        let mut sb = 0.0;
        let mut se = 0.0;
        for s in members {
            sb += s.score_at(i) / MAX_SCORE as f64;
            se += s.arousal[i.min(s.arousal.len() - 1)];
        }
        score[i] = sb / n;
        arousal[i] = se / n;
    }
    Ok(PersonaModel {
        label,
        members: members.iter().map(|s| s.session_id.clone()).collect(),
        target_score: score,
        target_arousal: arousal,
        action_frequencies: action_frequencies(members.iter().copied()),
        member_count: members.len(),
        mean_final_score: members.iter().map(|s| s.final_score()).sum::<f64>() / n,
        mean_length: members.iter().map(|s| s.len() as f64).sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    /// Ward linkage threshold for the dendrogram cut (on standardized aggregates).
    pub threshold: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { threshold: 160.0 }
    }
}

/// All personas of a dataset, plus the cohort-wide action table used for
/// exploration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaSet {
    pub threshold: f64,
    pub population_frequencies: [f64; Action::COUNT],
    pub personas: Vec<PersonaModel>,
}

impl PersonaSet {
    pub fn get(&self, label: Tier) -> Result<&PersonaModel, PersonaError> {
        self.personas
            .iter()
            .find(|p| p.label == label)
            .ok_or(PersonaError::MissingPersona(label))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PersonaError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| PersonaError::Io(e.to_string()))?;
        fs::write(path, text).map_err(|e| PersonaError::Io(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PersonaError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| PersonaError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PersonaError::Io(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct Clustering {
    pub aggregates: Vec<AggregateVector>,
    pub standardized: Vec<Vec<f64>>,
    pub dendrogram: Dendrogram,
    /// Cluster label per session, in dataset order.
    pub assignment: Vec<usize>,
    pub personas: PersonaSet,
}

/// Aggregate, standardize, cluster, cut and label. Clusters are ranked by
/// mean final score (descending), then mean session length (ascending), and
/// labeled expert, advanced, intermediate, beginner in that order.
pub fn cluster_dataset(data: &Dataset, config: &ClusterConfig) -> Result<Clustering, PersonaError> {
    if !(config.threshold > 0.0) {
        return Err(PersonaError::Threshold(config.threshold));
    }
    let aggregates = data.sessions.iter().map(aggregate).collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<Vec<f64>> = aggregates.iter().map(|a| a.0.to_vec()).collect();
    let standardized = standardize(&rows);
    let dendrogram = ward_cluster(&standardized)?;
    let assignment = dendrogram.cut(config.threshold);
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    if k != Tier::ALL.len() {
        return Err(PersonaError::ClusterCount(k));
    }
    let groups: Vec<Vec<&PlaySession>> = (0..k)
        .map(|c| {
            data.sessions
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == c)
                .map(|(s, _)| s)
                .collect()
        })
        .collect();
    let mut ranked: Vec<PersonaModel> = groups
        .iter()
        .map(|g| build_persona(Tier::Beginner, g))
        .collect::<Result<_, _>>()?;
    ranked.sort_by(|a, b| {
        b.mean_final_score
            .total_cmp(&a.mean_final_score)
            .then(a.mean_length.total_cmp(&b.mean_length))
    });
    for (p, tier) in ranked.iter_mut().zip(Tier::BY_RANK) {
        p.label = tier;
    }
    Ok(Clustering {
        aggregates,
        standardized,
        dendrogram,
        assignment,
        personas: PersonaSet {
            threshold: config.threshold,
            population_frequencies: data.action_frequencies(),
            personas: ranked,
        },
    })
}

/// Sessions of `data` belonging to `persona`, in dataset order.
pub fn member_sessions<'a>(
    data: &'a Dataset,
    persona: &PersonaModel,
) -> Result<Vec<&'a PlaySession>, PersonaError> {
    persona
        .members
        .iter()
        .map(|id| data.get(id).ok_or_else(|| PersonaError::UnknownSession(id.clone())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{FeatureVector, FEATURE_COUNT};
    use crate::trace::{SessionMeta, WindowRecord};

    fn session(id: &str, scores: &[f64], arousal: &[f64]) -> PlaySession {
        PlaySession {
            session_id: id.into(),
            tier: None,
            windows: scores
                .iter()
                .map(|&s| {
                    let mut f = [0.0; FEATURE_COUNT];
                    f[feature::SCORE] = s;
                    f[feature::SPEED] = 10.0;
                    f[feature::NEAREST_VISIBLE] = 500.0;
                    WindowRecord { features: FeatureVector(f), action: Action::new(0, 1).unwrap() }
                })
                .collect(),
            arousal: arousal.to_vec(),
            meta: SessionMeta::default(),
        }
    }

    #[test]
    fn aggregate_fields() {
        let mut s = session("a", &[0.0, 8.0, 16.0], &[0.1, 0.2, 0.3]);
        s.windows[1].features.0[feature::CRASHED] = 1.0;
        s.windows[2].features.0[feature::LATERAL_OFFSET] = -3.0;
        let v = aggregate(&s).unwrap();
        assert_eq!(v.0[0], 16.0);
        assert_eq!(v.0[1], 10.0);
        assert_eq!(v.0[2], 1.0);
        assert_eq!(v.0[5], 0.0);
        assert_eq!(v.0[6], 0.0);
        assert_eq!(v.0[7], 1.0);
        assert_eq!(v.0[8], 3.0);
        assert_eq!(aggregate(&s.clone()).unwrap(), v);
        assert!(aggregate(&session("e", &[], &[])).is_err());
    }

    #[test]
    fn standardize_handles_constant_columns() {
        let z = standardize(&[vec![1.0, 5.0], vec![3.0, 5.0]]);
        assert_eq!(z, vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]), 1.0);
        let x = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        assert!(x < 0.0);
        // value checked against the contingency-table formula by hand
        let y = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]);
        assert!((y - 0.242_424_242_424_242_4).abs() < 1e-12);
    }

    #[test]
    fn single_member_persona_equals_member() {
        let s = session("a", &[0.0, 8.0, 16.0], &[0.1, 0.9, 0.4]);
        let p = build_persona(Tier::Expert, &[&s]).unwrap();
        assert_eq!(p.target_score.len(), 480);
        assert_eq!(&p.target_score[..3], &[0.0, 0.5, 1.0]);
        assert!(p.target_score[3..].iter().all(|&v| v == 1.0));
        assert_eq!(&p.target_arousal[..3], &[0.1, 0.9, 0.4]);
        assert!(p.target_arousal[3..].iter().all(|&v| v == 0.4));
        assert!((p.action_frequencies.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn early_finishers_hold_final_value() {
        let a = session("a", &vec![16.0; 300], &vec![0.5; 300]);
        let b = session("b", &vec![16.0; 250], &vec![0.5; 250]);
        let p = build_persona(Tier::Expert, &[&a, &b]).unwrap();
        assert!(p.target_score[300..].iter().all(|&v| v == 1.0));
        assert!(p.target_score.windows(2).all(|w| w[0] <= w[1]));
    }
}
