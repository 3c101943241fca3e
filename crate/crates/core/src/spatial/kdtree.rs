//! 2-D kd-tree over block centroids.

use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum KdNode {
    Leaf { start: usize, end: usize },
    Inner { axis: usize, split: f64, left: usize, right: usize },
}

/// One query result.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor<'a> {
    pub id: &'a str,
    /// Row of the block in the table the index was built from.
    pub row: usize,
    pub distance: f64,
}

/// kd-tree over points, each carrying an id and a row index. Ties in distance
/// are resolved by lexicographic id order.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<[f64; 2]>,
    ids: Vec<String>,
    rows: Vec<usize>,
    /// Lexicographic rank of each id.
    rank: Vec<u32>,
    /// Point order referenced by the leaves.
    perm: Vec<u32>,
    nodes: Vec<KdNode>,
}

impl SpatialIndex {
    pub fn new(entries: Vec<(String, [f64; 2], usize)>) -> Self {
        let n = entries.len();
        let mut points = Vec::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for (id, p, row) in entries {
            ids.push(id);
            points.push(p);
            rows.push(row);
        }
        let mut by_id: Vec<u32> = (0..n as u32).collect();
        by_id.sort_by(|&a, &b| ids[a as usize].cmp(&ids[b as usize]));
        let mut rank = vec![0u32; n];
        for (r, &i) in by_id.iter().enumerate() {
            rank[i as usize] = r as u32;
        }
        let mut index = Self { points, ids, rows, rank, perm: (0..n as u32).collect(), nodes: Vec::new() };
        if n > 0 {
            index.build(0, n);
        }
        index
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(KdNode::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let slice = &self.perm[start..end];
        let spread = |axis: usize| {
            let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.points[i as usize][axis];
                (lo.min(v), hi.max(v))
            });
            hi - lo
        };
        let axis = if spread(0) >= spread(1) { 0 } else { 1 };
        if spread(axis) == 0.0 {
            return id;
        }
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a as usize][axis].total_cmp(&pts[b as usize][axis])
        });
        let split = self.points[self.perm[mid] as usize][axis];
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = KdNode::Inner { axis, split, left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest indexed points to `query`, ascending by distance, then id.
    /// Returns every point when fewer than `k` exist.
    pub fn knn_query(&self, query: [f64; 2], k: usize) -> Result<Vec<Neighbor<'_>>> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let k = k.max(1).min(self.len());
        let mut best: Vec<(f64, u32, u32)> = Vec::with_capacity(k + 1);
        self.search(0, query, k, &mut best);
        Ok(best
            .into_iter()
            .map(|(d2, _, i)| Neighbor {
                id: &self.ids[i as usize],
                row: self.rows[i as usize],
                distance: d2.sqrt(),
            })
            .collect())
    }

    fn search(&self, node: usize, q: [f64; 2], k: usize, best: &mut Vec<(f64, u32, u32)>) {
        match self.nodes[node] {
            KdNode::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    let p = self.points[i as usize];
                    let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                    let key = (d2, self.rank[i as usize], i);
                    if best.len() == k {
                        let w = best[k - 1];
                        if (key.0, key.1) >= (w.0, w.1) {
                            continue;
                        }
                        best.pop();
                    }
                    let pos = best.partition_point(|e| (e.0, e.1) < (key.0, key.1));
                    best.insert(pos, key);
                }
            }
            KdNode::Inner { axis, split, left, right } => {
                let diff = q[axis] - split;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, best);
                if best.len() < k || diff * diff <= best[k - 1].0 {
                    self.search(far, q, k, best);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn brute(entries: &[(String, [f64; 2], usize)], q: [f64; 2], k: usize) -> Vec<(&str, f64)> {
        let mut all: Vec<(&str, f64)> = entries
            .iter()
            .map(|(id, p, _)| (id.as_str(), ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(b.0)));
        all.truncate(k);
        all
    }

    fn entries(pts: &[[f64; 2]]) -> Vec<(String, [f64; 2], usize)> {
        pts.iter().enumerate().map(|(i, &p)| (format!("b{i}"), p, i)).collect()
    }

    #[test]
    fn self_query_returns_self() {
        let e = entries(&[[0.0, 0.0], [5.0, 5.0], [2.0, 1.0]]);
        let idx = SpatialIndex::new(e);
        let r = idx.knn_query([5.0, 5.0], 1).unwrap();
        assert_eq!((r[0].id, r[0].distance), ("b1", 0.0));
    }

    #[test]
    fn five_points_match_hand_scan() {
        let e = entries(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0], [-1.0, -1.0]]);
        let idx = SpatialIndex::new(e.clone());
        let got: Vec<_> = idx.knn_query([0.2, 0.1], 3).unwrap().into_iter().map(|n| n.id).collect();
        assert_eq!(got, vec!["b0", "b1", "b4"]);
        let want: Vec<_> = brute(&e, [0.2, 0.1], 3).into_iter().map(|(id, _)| id).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn k_larger_than_index_returns_all() {
        let idx = SpatialIndex::new(entries(&[[0.0, 0.0], [1.0, 1.0]]));
        assert_eq!(idx.knn_query([0.0, 0.0], 10).unwrap().len(), 2);
        assert!(matches!(SpatialIndex::new(vec![]).knn_query([0.0, 0.0], 1), Err(Error::EmptyIndex)));
    }

    #[test]
    fn distance_ties_use_id_order() {
        let e = vec![
            ("zeta".to_string(), [1.0, 0.0], 0),
            ("alpha".to_string(), [-1.0, 0.0], 1),
            ("mid".to_string(), [0.0, 1.0], 2),
        ];
        let idx = SpatialIndex::new(e);
        let got: Vec<_> = idx.knn_query([0.0, 0.0], 2).unwrap().into_iter().map(|n| n.id).collect();
        assert_eq!(got, vec!["alpha", "mid"]);
    }

    #[test]
    fn grid_with_many_ties_matches_brute_force() {
        let pts: Vec<[f64; 2]> = (0..400).map(|i| [(i % 20) as f64, (i / 20) as f64]).collect();
        let e = entries(&pts);
        let idx = SpatialIndex::new(e.clone());
        for q in [[5.0, 5.0], [0.0, 0.0], [10.5, 3.0], [19.0, 7.0]] {
            for k in [1, 4, 5, 9, 13] {
                let got: Vec<_> = idx.knn_query(q, k).unwrap().into_iter().map(|n| (n.id, n.distance)).collect();
                assert_eq!(got, brute(&e, q, k));
            }
        }
    }

    proptest! {
        #[test]
        fn matches_brute_force(n in 1usize..500, k in 1usize..20, seed in 0u64..1000) {
            let mut rng = rng_from_seed(seed);
            let pts: Vec<[f64; 2]> = (0..n)
                .map(|_| [rng.gen_range(0.0..1000.0f64).round(), rng.gen_range(0.0..1000.0f64)])
                .collect();
            let e = entries(&pts);
            let idx = SpatialIndex::new(e.clone());
            let q = [rng.gen_range(-100.0..1100.0), rng.gen_range(-100.0..1100.0)];
            let got = idx.knn_query(q, k).unwrap();
            let want = brute(&e, q, k);
            prop_assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                prop_assert_eq!(g.id, w.0);
                prop_assert!((g.distance - w.1).abs() <= 1e-12);
            }
        }
    }
}
