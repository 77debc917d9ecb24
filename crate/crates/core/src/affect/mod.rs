//! Distance-weighted kNN arousal estimates over one persona's play windows.

pub mod kdtree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kdtree::{squared_distance, KdTree};

use crate::env::{FeatureVector, FEATURE_COUNT};
use crate::persona::PersonaModel;
use crate::trace::{Dataset, PlaySession};

#[derive(Debug, Error, PartialEq)]
pub enum AffectError {
    #[error("k must be >= 1")]
    ZeroK,
    #[error("index has {rows} rows but k = {k}")]
    InsufficientRows { rows: usize, k: usize },
    #[error("non-finite feature in session {session}, window {window}")]
    NonFinite { session: String, window: usize },
    #[error("persona member {0} is not in the dataset")]
    UnknownSession(String),
    #[error("unknown weighting scheme {0:?} (expected dudani, inverse-distance or literal-prose)")]
    UnknownWeighting(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// `w_j = (d_k - d_j) / (d_k - d_1)`, all ones when `d_k == d_1`.
    #[default]
    Dudani,
    /// `w_j = 1 / d_j`.
    InverseDistance,
    /// `w_j = d_j`: farther neighbors weigh more.
    LiteralProse,
}

impl Weighting {
    pub fn as_str(self) -> &'static str {
        match self {
            Weighting::Dudani => "dudani",
            Weighting::InverseDistance => "inverse-distance",
            Weighting::LiteralProse => "literal-prose",
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Weighting {
    type Err = AffectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dudani" => Ok(Weighting::Dudani),
            "inverse-distance" => Ok(Weighting::InverseDistance),
            "literal-prose" => Ok(Weighting::LiteralProse),
            other => Err(AffectError::UnknownWeighting(other.to_string())),
        }
    }
}

/// A neighbor: row index and Euclidean distance in standardized space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub row: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffectIndex {
    /// Standardized rows, row-major.
    data: Vec<f64>,
    arousal: Vec<f64>,
    mean: [f64; FEATURE_COUNT],
    std: [f64; FEATURE_COUNT],
    k: usize,
    weighting: Weighting,
    tree: KdTree,
}

impl AffectIndex {
    /// Index over all windows of `sessions`, in order.
    pub fn from_sessions(
        sessions: &[&PlaySession],
        k: usize,
        weighting: Weighting,
    ) -> Result<Self, AffectError> {
        if k == 0 {
            return Err(AffectError::ZeroK);
        }
        let mut raw: Vec<[f64; FEATURE_COUNT]> = Vec::new();
        let mut arousal = Vec::new();
        for s in sessions {
            for (i, (w, a)) in s.windows.iter().zip(&s.arousal).enumerate() {
                if !w.features.is_finite() || !a.is_finite() {
                    return Err(AffectError::NonFinite { session: s.session_id.clone(), window: i });
                }
                raw.push(w.features.0);
                arousal.push(*a);
            }
        }
        if raw.len() < k {
            return Err(AffectError::InsufficientRows { rows: raw.len(), k });
        }
        let n = raw.len() as f64;
        let mut mean = [0.0; FEATURE_COUNT];
        let mut std = [1.0; FEATURE_COUNT];
        for j in 0..FEATURE_COUNT {
            mean[j] = raw.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = raw.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                std[j] = var.sqrt();
            }
        }
        let mut data = Vec::with_capacity(raw.len() * FEATURE_COUNT);
        for r in &raw {
            for j in 0..FEATURE_COUNT {
                data.push((r[j] - mean[j]) / std[j]);
            }
        }
        let tree = KdTree::build(&data, FEATURE_COUNT);
        Ok(Self { data, arousal, mean, std, k, weighting, tree })
    }

    pub fn len(&self) -> usize {
        self.arousal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arousal.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    pub fn arousal(&self, row: usize) -> f64 {
        self.arousal[row]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * FEATURE_COUNT..(row + 1) * FEATURE_COUNT]
    }

    pub fn standardize(&self, q: &FeatureVector) -> [f64; FEATURE_COUNT] {
        let mut z = [0.0; FEATURE_COUNT];
        for j in 0..FEATURE_COUNT {
            z[j] = (q.0[j] - self.mean[j]) / self.std[j];
        }
        z
    }

    /// k nearest rows via the kd-tree, ordered by distance then row.
    pub fn neighbors(&self, q: &FeatureVector) -> Vec<Neighbor> {
        let z = self.standardize(q);
        self.tree
            .nearest(&self.data, &z, self.k)
            .into_iter()
            .map(|(d, row)| Neighbor { row, distance: d.sqrt() })
            .collect()
    }

    /// [`neighbors`](Self::neighbors) warm-started from earlier neighbor rows;
    /// the result is identical.
    pub fn neighbors_with_hint(&self, q: &FeatureVector, hint: &[usize]) -> Vec<Neighbor> {
        let z = self.standardize(q);
        self.tree
            .nearest_with_hint(&self.data, &z, self.k, hint)
            .into_iter()
            .map(|(d, row)| Neighbor { row, distance: d.sqrt() })
            .collect()
    }

    /// Exhaustive-scan counterpart of [`neighbors`](Self::neighbors).
    pub fn brute_force_neighbors(&self, q: &FeatureVector) -> Vec<Neighbor> {
        let z = self.standardize(q);
        let mut all: Vec<(f64, usize)> = (0..self.len())
            .map(|r| (squared_distance(self.row(r), &z), r))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(self.k);
        all.into_iter()
            .map(|(d, row)| Neighbor { row, distance: d.sqrt() })
            .collect()
    }

    pub fn estimate_arousal(&self, q: &FeatureVector) -> f64 {
        self.weighted(&self.neighbors(q))
    }

    pub fn brute_force_oracle(&self, q: &FeatureVector) -> f64 {
        self.weighted(&self.brute_force_neighbors(q))
    }

    /// Weighted mean of the neighbors' arousal under the configured scheme.
    pub fn weighted(&self, nb: &[Neighbor]) -> f64 {
        weighted_mean(self.weighting, nb, |r| self.arousal[r])
    }
}

/// Applies a weighting scheme to neighbors sorted by ascending distance.
pub fn weighted_mean(scheme: Weighting, nb: &[Neighbor], value: impl Fn(usize) -> f64) -> f64 {
    assert!(!nb.is_empty(), "no neighbors");
    let zeros: Vec<f64> = nb.iter().filter(|n| n.distance == 0.0).map(|n| value(n.row)).collect();
    if !zeros.is_empty() {
        return (zeros.iter().sum::<f64>() / zeros.len() as f64).clamp(0.0, 1.0);
    }
    let d1 = nb[0].distance;
    let dk = nb[nb.len() - 1].distance;
    let weight = |d: f64| match scheme {
        Weighting::Dudani if dk == d1 => 1.0,
        Weighting::Dudani => (dk - d) / (dk - d1),
        Weighting::InverseDistance => 1.0 / d,
        Weighting::LiteralProse => d,
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for n in nb {
        let w = weight(n.distance);
        num += w * value(n.row);
        den += w;
    }
    (num / den).clamp(0.0, 1.0)
}

/// Index over the windows of `persona`'s member sessions.
pub fn build_index(
    data: &Dataset,
    persona: &PersonaModel,
    k: usize,
    weighting: Weighting,
) -> Result<AffectIndex, AffectError> {
    let members = persona
        .members
        .iter()
        .map(|id| data.get(id).ok_or_else(|| AffectError::UnknownSession(id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    AffectIndex::from_sessions(&members, k, weighting)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Action;
    use crate::trace::{SessionMeta, WindowRecord};

    fn session(rows: &[(f64, f64)]) -> PlaySession {
        PlaySession {
            session_id: "s".into(),
            tier: None,
            windows: rows
                .iter()
                .map(|&(x, _)| {
                    let mut f = [0.0; FEATURE_COUNT];
                    f[0] = x;
                    WindowRecord { features: FeatureVector(f), action: Action::new(0, 0).unwrap() }
                })
                .collect(),
            arousal: rows.iter().map(|r| r.1).collect(),
            meta: SessionMeta::default(),
        }
    }

    fn query(x: f64) -> FeatureVector {
        let mut f = [0.0; FEATURE_COUNT];
        f[0] = x;
        FeatureVector(f)
    }

    fn nb(d: &[f64]) -> Vec<Neighbor> {
        d.iter().enumerate().map(|(row, &distance)| Neighbor { row, distance }).collect()
    }

    #[test]
    fn dudani_hand_example() {
        let a = [0.9, 0.5, 0.1];
        let v = weighted_mean(Weighting::Dudani, &nb(&[1.0, 2.0, 3.0]), |r| a[r]);
        assert!((v - 1.15 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn equal_distances_give_plain_mean() {
        let a = [0.1, 0.2, 0.3, 0.4, 0.5];
        for s in [Weighting::Dudani, Weighting::InverseDistance, Weighting::LiteralProse] {
            let v = weighted_mean(s, &nb(&[2.0; 5]), |r| a[r]);
            assert!((v - 0.3).abs() < 1e-12, "{s}");
        }
    }

    #[test]
    fn exact_match_returns_mean_of_zero_distance_rows() {
        let a = [0.2, 0.6, 1.0];
        let v = weighted_mean(Weighting::InverseDistance, &nb(&[0.0, 0.0, 1.0]), |r| a[r]);
        assert!((v - 0.4).abs() < 1e-15);
    }

    #[test]
    fn schemes_differ_on_unequal_distances() {
        let a = [1.0, 0.0];
        let d = nb(&[1.0, 3.0]);
        assert_eq!(weighted_mean(Weighting::Dudani, &d, |r| a[r]), 1.0);
        assert_eq!(weighted_mean(Weighting::InverseDistance, &d, |r| a[r]), 0.75);
        assert_eq!(weighted_mean(Weighting::LiteralProse, &d, |r| a[r]), 0.25);
    }

    #[test]
    fn k1_returns_nearest_row() {
        let s = session(&[(0.0, 0.1), (1.0, 0.7), (5.0, 0.3)]);
        let idx = AffectIndex::from_sessions(&[&s], 1, Weighting::Dudani).unwrap();
        assert_eq!(idx.estimate_arousal(&query(1.3)), 0.7);
        assert_eq!(idx.brute_force_oracle(&query(4.0)), 0.3);
    }

    #[test]
    fn ties_go_to_lower_row() {
        let s = session(&[(0.0, 0.1), (2.0, 0.9)]);
        let idx = AffectIndex::from_sessions(&[&s], 1, Weighting::Dudani).unwrap();
        assert_eq!(idx.neighbors(&query(1.0))[0].row, 0);
        assert_eq!(idx.brute_force_neighbors(&query(1.0))[0].row, 0);
    }

    #[test]
    fn build_errors() {
        let s = session(&[(0.0, 0.1), (1.0, 0.2)]);
        assert_eq!(
            AffectIndex::from_sessions(&[&s], 3, Weighting::Dudani),
            Err(AffectError::InsufficientRows { rows: 2, k: 3 })
        );
        assert_eq!(AffectIndex::from_sessions(&[&s], 0, Weighting::Dudani), Err(AffectError::ZeroK));
        let mut bad = s.clone();
        bad.windows[1].features.0[3] = f64::NAN;
        assert!(matches!(
            AffectIndex::from_sessions(&[&bad], 1, Weighting::Dudani),
            Err(AffectError::NonFinite { window: 1, .. })
        ));
    }

    #[test]
    fn duplicating_nearest_row_moves_toward_it() {
        let rows = [(0.0, 0.9), (1.0, 0.2), (2.0, 0.4), (3.0, 0.1)];
        let q = query(0.2);
        let base = AffectIndex::from_sessions(&[&session(&rows)], 3, Weighting::InverseDistance)
            .unwrap()
            .estimate_arousal(&q);
        let mut dup = rows.to_vec();
        dup.push((0.0, 0.9));
        let more = AffectIndex::from_sessions(&[&session(&dup)], 3, Weighting::InverseDistance)
            .unwrap()
            .estimate_arousal(&q);
        assert!((more - 0.9).abs() <= (base - 0.9).abs());
    }

    #[test]
    fn weighting_parses() {
        assert_eq!("literal-prose".parse::<Weighting>().unwrap(), Weighting::LiteralProse);
        assert!("median".parse::<Weighting>().is_err());
    }
}
