//! Exact k-nearest-neighbor search over a flat row-major matrix.
//!
//! A subtree is skipped only when the squared distance from the query to its
//! bounding box is strictly greater than the current k-th best distance, so
//! candidates tied with the k-th best are always visited and the
//! `(distance, row)` ordering matches an exhaustive scan exactly.

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdTree {
    dim: usize,
    /// Row ids in leaf order.
    order: Vec<usize>,
    nodes: Vec<Node>,
    /// Bounding boxes, parallel to `nodes`.
    boxes: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Squared Euclidean distance. Dimensions are accumulated in four
/// interleaved lanes (`i % 4`) that are combined as `(l0 + l1) + (l2 + l3)`;
/// every caller uses this same order, so results are bit-identical.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let n = a.len();
    let full = n - n % 4;
    let mut i = 0;
    while i < full {
        for l in 0..4 {
            let d = a[i + l] - b[i + l];
            lanes[l] += d * d;
        }
        i += 4;
    }
    for t in full..n {
        let d = a[t] - b[t];
        lanes[t % 4] += d * d;
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3])
}

/// [`squared_distance`], or `None` once a partial result exceeds `limit`.
/// Every lane only grows, so a rejected row can never come in at or under
/// `limit`.
fn bounded_distance(a: &[f64], b: &[f64], limit: f64) -> Option<f64> {
    let mut lanes = [0.0f64; 4];
    let n = a.len();
    let full = n - n % 4;
    let mut i = 0;
    while i < full {
        for l in 0..4 {
            let d = a[i + l] - b[i + l];
            lanes[l] += d * d;
        }
        i += 4;
        if i % 8 == 0 && (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) > limit {
            return None;
        }
    }
    for t in full..n {
        let d = a[t] - b[t];
        lanes[t % 4] += d * d;
    }
    let s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    (s <= limit).then_some(s)
}

fn box_distance(q: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 4];
    for t in 0..q.len() {
        let d = (lo[t] - q[t]).max(q[t] - hi[t]).max(0.0);
        lanes[t % 4] += d * d;
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3])
}

/// Sorted list of the best `k` `(squared distance, row)` pairs.
pub(crate) struct Best {
    k: usize,
    pub(crate) items: Vec<(f64, usize)>,
}

impl Best {
    pub(crate) fn new(k: usize) -> Self {
        Self { k, items: Vec::with_capacity(k + 1) }
    }

    fn worst(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[self.k - 1].0
        }
    }

    pub(crate) fn offer(&mut self, d: f64, row: usize) {
        if self.items.iter().any(|&(_, r)| r == row) {
            return;
        }
        if self.items.len() == self.k {
            let (wd, wr) = self.items[self.k - 1];
            if d > wd || (d == wd && row > wr) {
                return;
            }
        }
        let pos = self
            .items
            .partition_point(|&(x, r)| x < d || (x == d && r < row));
        self.items.insert(pos, (d, row));
        self.items.truncate(self.k);
    }
}

impl KdTree {
    pub fn build(data: &[f64], dim: usize) -> Self {
        assert!(dim > 0 && data.len().is_multiple_of(dim));
        let n = data.len() / dim;
        let mut tree = KdTree {
            dim,
            order: (0..n).collect(),
            nodes: Vec::new(),
            boxes: Vec::new(),
        };
        if n > 0 {
            tree.build_node(data, 0, n);
        }
        tree
    }

    fn row<'a>(&self, data: &'a [f64], r: usize) -> &'a [f64] {
        &data[r * self.dim..(r + 1) * self.dim]
    }

    fn build_node(&mut self, data: &[f64], start: usize, end: usize) -> usize {
        let dim = self.dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for &r in &self.order[start..end] {
            let row = &data[r * dim..(r + 1) * dim];
            for j in 0..dim {
                lo[j] = lo[j].min(row[j]);
                hi[j] = hi[j].max(row[j]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        let count = (end - start) as f64;
        let mut spread = vec![0.0; dim];
        for j in 0..dim {
            let mean = self.order[start..end].iter().map(|&r| data[r * dim + j]).sum::<f64>() / count;
            spread[j] = self.order[start..end]
                .iter()
                .map(|&r| (data[r * dim + j] - mean).powi(2))
                .sum::<f64>();
        }
        self.boxes.push((lo, hi));
        if end - start <= LEAF_SIZE {
            return id;
        }
        let axis = (0..dim)
            .max_by(|&a, &b| spread[a].total_cmp(&spread[b]))
            .expect("dim > 0");
        if spread[axis] <= 0.0 {
            // all rows identical
            return id;
        }
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            data[a * dim + axis]
                .total_cmp(&data[b * dim + axis])
                .then(a.cmp(&b))
        });
        let left = self.build_node(data, start, mid);
        let right = self.build_node(data, mid, end);
        self.nodes[id] = Node::Split { left, right };
        id
    }

    /// The `k` nearest rows ordered by `(squared distance, row)`.
    pub fn nearest(&self, data: &[f64], q: &[f64], k: usize) -> Vec<(f64, usize)> {
        self.nearest_with_hint(data, q, k, &[])
    }

    /// Like [`nearest`](Self::nearest), but first scores the `hint` rows (for
    /// example the previous query's neighbors) to start with a tight bound.
    /// The result does not depend on the hint.
    pub fn nearest_with_hint(
        &self,
        data: &[f64],
        q: &[f64],
        k: usize,
        hint: &[usize],
    ) -> Vec<(f64, usize)> {
        let mut best = Best::new(k);
        for &r in hint {
            best.offer(squared_distance(self.row(data, r), q), r);
        }
        if !self.nodes.is_empty() && k > 0 {
            self.search(data, 0, q, &mut best);
        }
        best.items
    }

    fn search(&self, data: &[f64], node: usize, q: &[f64], best: &mut Best) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &r in &self.order[*start..*end] {
                    if let Some(d) = bounded_distance(self.row(data, r), q, best.worst()) {
                        best.offer(d, r);
                    }
                }
            }
            Node::Split { left, right, .. } => {
                let (l, r) = (*left, *right);
                let dl = box_distance(q, &self.boxes[l].0, &self.boxes[l].1);
                let dr = box_distance(q, &self.boxes[r].0, &self.boxes[r].1);
                let (first, df, second, ds) = if dl <= dr { (l, dl, r, dr) } else { (r, dr, l, dl) };
                if df <= best.worst() {
                    self.search(data, first, q, best);
                }
                if ds <= best.worst() {
                    self.search(data, second, q, best);
                }
            }
        }
    }

    #[cfg(test)]
    fn root_box(&self) -> Option<&(Vec<f64>, Vec<f64>)> {
        self.boxes.first()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scan(data: &[f64], dim: usize, q: &[f64], k: usize) -> Vec<(f64, usize)> {
        let mut all: Vec<(f64, usize)> = data
            .chunks(dim)
            .enumerate()
            .map(|(i, r)| (squared_distance(r, q), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k);
        all
    }

    #[test]
    fn matches_scan_with_duplicates_and_grid_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = 4;
        // coarse integer grid forces many exact distance ties
        let data: Vec<f64> = (0..600 * dim).map(|_| rng.gen_range(0..4) as f64).collect();
        let tree = KdTree::build(&data, dim);
        assert_eq!(tree.root_box().unwrap().0, vec![0.0; dim]);
        for _ in 0..300 {
            let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1..5) as f64).collect();
            for k in [1, 5, 17] {
                let expect = scan(&data, dim, &q, k);
                assert_eq!(tree.nearest(&data, &q, k), expect);
                let hint: Vec<usize> = (0..k).map(|_| rng.gen_range(0..600)).collect();
                assert_eq!(tree.nearest_with_hint(&data, &q, k, &hint), expect);
            }
        }
    }

    #[test]
    fn continuous_data_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dim = 7;
        let data: Vec<f64> = (0..2000 * dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let tree = KdTree::build(&data, dim);
        for _ in 0..200 {
            let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-4.0..4.0)).collect();
            assert_eq!(tree.nearest(&data, &q, 5), scan(&data, dim, &q, 5));
        }
    }

    #[test]
    fn k_larger_than_rows() {
        let data = vec![0.0, 1.0, 2.0];
        let tree = KdTree::build(&data, 1);
        assert_eq!(tree.nearest(&data, &[1.2], 10).len(), 3);
        assert!(KdTree::build(&[], 2).nearest(&[], &[0.0, 0.0], 3).is_empty());
    }
}
