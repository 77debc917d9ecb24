//! Ward agglomerative clustering via the Lance–Williams recurrence.
//!
//! Distances start as squared Euclidean distances between leaves. The stored
//! linkage of a merge between clusters `I` and `J` is
//! `2 n_I n_J / (n_I + n_J) * |c_I - c_J|^2`, which equals the plain squared
//! distance when both are single points. Cluster ids follow the usual
//! convention: leaves are `0..n`, the cluster formed by merge `m` is `n + m`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::PersonaError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn ward_cluster(vectors: &[Vec<f64>]) -> Result<Dendrogram, PersonaError> {
    let n = vectors.len();
    if n < 2 {
        return Err(PersonaError::TooFewSessions(n));
    }
    let dim = vectors[0].len();
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(PersonaError::Dimension { row: i, expected: dim, found: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(PersonaError::NonFinite(i));
        }
    }

    // slot-indexed state; `id[s]` is the cluster id living in slot `s`
    let mut id: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = squared_distance(&vectors[i], &vectors[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }

    let mut merges = Vec::with_capacity(n - 1);
    let mut prev = 0.0f64;
    for m in 0..(n - 1) {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !active[j] {
                    continue;
                }
                let pair = (id[i].min(id[j]), id[i].max(id[j]));
                let better = match best {
                    None => true,
                    Some((bd, bp, _, _)) => d[i][j] < bd || (d[i][j] == bd && pair < bp),
                };
                if better {
                    best = Some((d[i][j], pair, i, j));
                }
            }
        }
        let (dist, (a, b), i, j) = best.expect("at least two active clusters");
        assert!(
            dist >= prev - 1e-9 * prev.max(1.0),
            "ward linkage decreased: {dist} after {prev}"
        );
        prev = prev.max(dist);

        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let nk = size[k] as f64;
            let v = ((ni + nk) * d[k][i] + (nj + nk) * d[k][j] - nk * dist) / (ni + nj + nk);
            d[k][i] = v;
            d[i][k] = v;
        }
        size[i] += size[j];
        active[j] = false;
        id[i] = n + m;
        merges.push(Merge { a, b, distance: dist, size: size[i] });
    }
    Ok(Dendrogram { leaves: n, merges })
}

impl Dendrogram {
    /// Flat clustering: leaves joined by merges with linkage strictly below
    /// `threshold`. Labels are numbered in order of each cluster's first leaf.
    pub fn cut(&self, threshold: f64) -> Vec<usize> {
        let n = self.leaves;
        let mut parent: Vec<usize> = (0..2 * n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (m, merge) in self.merges.iter().enumerate() {
            if merge.distance < threshold {
                let node = n + m;
                let ra = find(&mut parent, merge.a);
                let rb = find(&mut parent, merge.b);
                parent[ra] = node;
                parent[rb] = node;
            }
        }
        let mut label_of_root = std::collections::HashMap::new();
        (0..n)
            .map(|leaf| {
                let r = find(&mut parent, leaf);
                let next = label_of_root.len();
                *label_of_root.entry(r).or_insert(next)
            })
            .collect()
    }

    pub fn cluster_count(&self, threshold: f64) -> usize {
        1 + self.merges.iter().filter(|m| m.distance >= threshold).count()
    }

    /// Merge list as CSV: `step,cluster_a,cluster_b,distance,size`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,cluster_a,cluster_b,distance,size\n");
        for (i, m) in self.merges.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{},{},{}", m.a, m.b, m.distance, m.size);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn centroid(points: &[&Vec<f64>]) -> Vec<f64> {
        let dim = points[0].len();
        (0..dim)
            .map(|k| points.iter().map(|p| p[k]).sum::<f64>() / points.len() as f64)
            .collect()
    }

    #[test]
    fn two_points_merge_at_squared_distance() {
        let d = ward_cluster(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(d.merges, vec![Merge { a: 0, b: 1, distance: 25.0, size: 2 }]);
    }

    #[test]
    fn tight_pairs_merge_first() {
        let v = vec![
            vec![0.0, 0.0],
            vec![10.0, 10.0],
            vec![0.1, 0.0],
            vec![10.0, 10.2],
        ];
        let d = ward_cluster(&v).unwrap();
        let first: Vec<(usize, usize)> = d.merges[..2].iter().map(|m| (m.a, m.b)).collect();
        assert_eq!(first, vec![(0, 2), (1, 3)]);
        assert_eq!((d.merges[2].a, d.merges[2].b), (4, 5));
        assert_eq!(d.cut(1.0), vec![0, 1, 0, 1]);
    }

    #[test]
    fn linkage_matches_centroid_formula() {
        let v: Vec<Vec<f64>> = (0..9)
            .map(|i| {
                let x = i as f64;
                vec![(x * 1.7).sin() * 5.0, (x * 0.9).cos() * 3.0, x * 0.3]
            })
            .collect();
        let dg = ward_cluster(&v).unwrap();
        let mut members: Vec<Vec<usize>> = (0..v.len()).map(|i| vec![i]).collect();
        for m in &dg.merges {
            let (ma, mb) = (members[m.a].clone(), members[m.b].clone());
            let ca = centroid(&ma.iter().map(|&i| &v[i]).collect::<Vec<_>>());
            let cb = centroid(&mb.iter().map(|&i| &v[i]).collect::<Vec<_>>());
            let (na, nb) = (ma.len() as f64, mb.len() as f64);
            let expect = 2.0 * na * nb / (na + nb) * squared_distance(&ca, &cb);
            assert!((m.distance - expect).abs() < 1e-9 * expect.max(1.0));
            members.push([ma, mb].concat());
        }
        for w in dg.merges.windows(2) {
            assert!(w[1].distance >= w[0].distance);
        }
    }

    #[test]
    fn cut_extremes_and_partition() {
        let v: Vec<Vec<f64>> = (0..6).map(|i| vec![(i * i) as f64]).collect();
        let dg = ward_cluster(&v).unwrap();
        let root = dg.merges.last().unwrap().distance;
        assert_eq!(dg.cut(root + 1.0), vec![0; 6]);
        assert_eq!(dg.cut(dg.merges[0].distance), vec![0, 1, 2, 3, 4, 5]);
        for t in [0.5, 3.0, 20.0, 100.0] {
            let labels = dg.cut(t);
            let k = labels.iter().max().unwrap() + 1;
            assert_eq!(k, dg.cluster_count(t));
        }
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let dg = ward_cluster(&v).unwrap();
        assert_eq!((dg.merges[0].a, dg.merges[0].b), (0, 1));
        assert_eq!((dg.merges[1].a, dg.merges[1].b), (2, 3));
    }

    #[test]
    fn permutation_gives_same_partition() {
        let v: Vec<Vec<f64>> = (0..8).map(|i| vec![(i as f64 * 2.3).sin(), (i % 3) as f64]).collect();
        let perm = [5, 2, 7, 0, 3, 6, 1, 4];
        let pv: Vec<Vec<f64>> = perm.iter().map(|&i| v[i].clone()).collect();
        let a = ward_cluster(&v).unwrap();
        let b = ward_cluster(&pv).unwrap();
        let da: Vec<f64> = a.merges.iter().map(|m| m.distance).collect();
        let db: Vec<f64> = b.merges.iter().map(|m| m.distance).collect();
        for (x, y) in da.iter().zip(&db) {
            assert!((x - y).abs() < 1e-9);
        }
        let t = da[4] + 1e-6;
        let la = a.cut(t);
        let lb = b.cut(t);
        for (pi, &orig) in perm.iter().enumerate() {
            for (pj, &orig2) in perm.iter().enumerate() {
                assert_eq!(la[orig] == la[orig2], lb[pi] == lb[pj]);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ward_cluster(&[vec![1.0]]).is_err());
        assert!(ward_cluster(&[vec![1.0], vec![f64::NAN]]).is_err());
        assert!(ward_cluster(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
