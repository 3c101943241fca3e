//! Multiclass gradient-boosted regression trees with a softmax objective.
//!
//! One tree per class per round, grown level-wise with exact greedy splits
//! over pre-sorted feature columns and Newton leaf values.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

use super::{check_labels, softmax_in_place, ProbabilisticClassifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    /// L2 penalty on leaf values.
    pub l2: f64,
    /// Minimum hessian mass per child.
    pub min_child_weight: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self { rounds: 200, max_depth: 6, learning_rate: 0.1, subsample: 1.0, l2: 1.0, min_child_weight: 1.0 }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rounds >= 1
            && self.max_depth >= 1
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.subsample > 0.0
            && self.subsample <= 1.0
            && self.l2 >= 0.0
            && self.min_child_weight >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid gradient-boosting parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf_of(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
                Node::Leaf { .. } => return i,
            }
        }
    }

    fn value(&self, node: usize) -> f64 {
        match self.nodes[node] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("value of an internal node"),
        }
    }

    fn predict(&self, x: &[f64]) -> f64 {
        self.value(self.leaf_of(x))
    }
}

/// Fitted ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoostedTrees {
    pub params: GbdtParams,
    pub n_classes: usize,
    pub n_features: usize,
    base_scores: Vec<f64>,
    /// `rounds[r][c]` is the tree for class `c` in round `r`.
    rounds: Vec<Vec<Tree>>,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    /// Largest rank sent left.
    rank: u32,
    gl: f64,
    hl: f64,
}

/// Contiguous run of samples belonging to one frontier node, identical in
/// every feature's ordering.
#[derive(Clone, Copy)]
struct Segment {
    node: usize,
    start: usize,
    end: usize,
    g: f64,
    h: f64,
}

/// Buffers reused across trees.
struct Workspace {
    /// Per feature, in-bag sample indices sorted by value and partitioned by node.
    order: Vec<Vec<u32>>,
    /// Dense value ranks aligned with `order`.
    ranks: Vec<Vec<u32>>,
    buf: Vec<u32>,
    buf_ranks: Vec<u32>,
    go_left: Vec<bool>,
}

/// Per-feature sorted distinct values, with each sample's index into them.
struct Ranked {
    distinct: Vec<Vec<f64>>,
    rank: Vec<Vec<u32>>,
}

impl Ranked {
    fn new(cols: &[Vec<f64>], sorted: &[Vec<u32>]) -> Self {
        let mut distinct = Vec::with_capacity(cols.len());
        let mut rank = Vec::with_capacity(cols.len());
        for (c, order) in cols.iter().zip(sorted) {
            let mut values: Vec<f64> = Vec::new();
            let mut r = vec![0u32; c.len()];
            for &i in order {
                let v = c[i as usize];
                if values.last().is_none_or(|&last| v > last) {
                    values.push(v);
                }
                r[i as usize] = (values.len() - 1) as u32;
            }
            distinct.push(values);
            rank.push(r);
        }
        Self { distinct, rank }
    }
}

/// Grows one tree on the samples listed in `bag` (per feature, sorted by
/// value, with `bag_ranks` aligned). `leaf_of[i]` receives the leaf of every
/// listed sample.
#[allow(clippy::too_many_arguments)]
fn grow_tree(
    distinct: &[Vec<f64>],
    bag: &[Vec<u32>],
    bag_ranks: &[Vec<u32>],
    gh: &[[f64; 2]],
    params: &GbdtParams,
    ws: &mut Workspace,
    leaf_of: &mut [u32],
) -> Tree {
    let lambda = params.l2;
    let mcw = params.min_child_weight;
    let leaf_value = |g: f64, h: f64| -params.learning_rate * g / (h + lambda);
    for (f, (b, r)) in bag.iter().zip(bag_ranks).enumerate() {
        ws.order[f].clear();
        ws.order[f].extend_from_slice(b);
        ws.ranks[f].clear();
        ws.ranks[f].extend_from_slice(r);
    }
    let m = bag[0].len();
    let (g0, h0) = bag[0].iter().fold((0.0, 0.0), |(g, h), &i| (g + gh[i as usize][0], h + gh[i as usize][1]));
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut frontier = vec![Segment { node: 0, start: 0, end: m, g: g0, h: h0 }];

    for depth in 0..=params.max_depth {
        if frontier.is_empty() {
            break;
        }
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for seg in frontier {
            let mut best = Best { gain: 1e-12, feature: usize::MAX, rank: 0, gl: 0.0, hl: 0.0 };
            if depth < params.max_depth && seg.end - seg.start >= 2 && seg.h >= 2.0 * mcw {
                let parent = seg.g * seg.g / (seg.h + lambda);
                for (f, (ord, vals)) in ws.order.iter().zip(&ws.ranks).enumerate() {
                    let run = &ord[seg.start..seg.end];
                    let xs = &vals[seg.start..seg.end];
                    let (mut gl, mut hl) = (0.0, 0.0);
                    let mut last = xs[0];
                    // Candidates are compared as gl²/(hl+λ) + gr²/(hr+λ) > target,
                    // cross-multiplied to avoid two divisions per position.
                    let mut target = best.gain + parent;
                    for (&i, &x) in run.iter().zip(xs) {
                        let hr = seg.h - hl;
                        if hr < mcw {
                            break;
                        }
                        let gr = seg.g - gl;
                        let (a, b) = (hl + lambda, hr + lambda);
                        let better = gl * gl * b + gr * gr * a > target * a * b;
                        if (x > last) & (hl >= mcw) & better {
                            let gain = gl * gl / a + gr * gr / b - parent;
                            if gain > best.gain {
                                best = Best { gain, feature: f, rank: last, gl, hl };
                                target = gain + parent;
                            }
                        }
                        let g = gh[i as usize];
                        gl += g[0];
                        hl += g[1];
                        last = x;
                    }
                }
            }
            if best.feature == usize::MAX {
                nodes[seg.node] = Node::Leaf { value: leaf_value(seg.g, seg.h) };
                for &i in &ws.order[0][seg.start..seg.end] {
                    leaf_of[i as usize] = seg.node as u32;
                }
                continue;
            }
            let split = best.feature;
            let mut n_left = 0;
            for (&i, &x) in ws.order[split][seg.start..seg.end].iter().zip(&ws.ranks[split][seg.start..seg.end]) {
                let l = x <= best.rank;
                ws.go_left[i as usize] = l;
                n_left += usize::from(l);
            }
            let left = nodes.len();
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            let (lo, hi) = (distinct[split][best.rank as usize], distinct[split][best.rank as usize + 1]);
            let mut threshold = lo + (hi - lo) * 0.5;
            if threshold >= hi {
                threshold = lo;
            }
            nodes[seg.node] = Node::Split { feature: split, threshold, left, right: left + 1 };
            let (gr, hr) = (seg.g - best.gl, seg.h - best.hl);
            if depth + 1 == params.max_depth {
                nodes[left] = Node::Leaf { value: leaf_value(best.gl, best.hl) };
                nodes[left + 1] = Node::Leaf { value: leaf_value(gr, hr) };
                for &i in &ws.order[split][seg.start..seg.end] {
                    leaf_of[i as usize] = if ws.go_left[i as usize] { left } else { left + 1 } as u32;
                }
                continue;
            }
            for (ord, vals) in ws.order.iter_mut().zip(ws.ranks.iter_mut()) {
                let run = &mut ord[seg.start..seg.end];
                let xs = &mut vals[seg.start..seg.end];
                // Branch-free stable partition: every element is written to
                // both destinations and only the matching cursor advances.
                let (mut w, mut r) = (0, 0);
                for idx in 0..run.len() {
                    let (i, x) = (run[idx], xs[idx]);
                    let l = usize::from(ws.go_left[i as usize]);
                    run[w] = i;
                    xs[w] = x;
                    ws.buf[r] = i;
                    ws.buf_ranks[r] = x;
                    w += l;
                    r += 1 - l;
                }
                run[w..].copy_from_slice(&ws.buf[..r]);
                xs[w..].copy_from_slice(&ws.buf_ranks[..r]);
            }
            let mid = seg.start + n_left;
            next.push(Segment { node: left, start: seg.start, end: mid, g: best.gl, h: best.hl });
            next.push(Segment { node: left + 1, start: mid, end: seg.end, g: gr, h: hr });
        }
        frontier = next;
    }
    Tree { nodes }
}

impl GradientBoostedTrees {
    pub fn fit(
        features: &[Vec<f64>],
        labels: &[usize],
        n_classes: usize,
        params: &GbdtParams,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        check_labels(features, labels, n_classes)?;
        let n = features.len();
        let d = features[0].len();
        let k = n_classes;
        let cols: Vec<Vec<f64>> = (0..d).map(|f| features.iter().map(|x| x[f]).collect()).collect();
        let sorted: Vec<Vec<u32>> = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]));
                idx
            })
            .collect();

        let mut counts = vec![0usize; k];
        for &l in labels {
            counts[l] += 1;
        }
        let base_scores: Vec<f64> = counts.iter().map(|&c| (c as f64 / n as f64).ln()).collect();
        let mut scores: Vec<f64> = (0..n).flat_map(|_| base_scores.iter().copied()).collect();
        let mut prob = vec![0.0; n * k];
        let mut gh = vec![[0.0; 2]; n];
        let mut in_bag = vec![true; n];
        let ranked = Ranked::new(&cols, &sorted);
        let mut bag = sorted.clone();
        let gather = |bag: &[Vec<u32>]| -> Vec<Vec<u32>> {
            bag.iter().zip(&ranked.rank).map(|(b, r)| b.iter().map(|&i| r[i as usize]).collect()).collect()
        };
        let mut bag_ranks = gather(&bag);
        let mut leaf_of = vec![0u32; n];
        let mut ws = Workspace {
            order: vec![Vec::with_capacity(n); d],
            ranks: vec![Vec::with_capacity(n); d],
            buf: vec![0; n],
            buf_ranks: vec![0; n],
            go_left: vec![false; n],
        };
        let mut rng = rng_from_seed(seed);
        let mut rounds = Vec::with_capacity(params.rounds);

        for _ in 0..params.rounds {
            prob.copy_from_slice(&scores);
            for row in prob.chunks_mut(k) {
                softmax_in_place(row);
            }
            if params.subsample < 1.0 {
                in_bag.iter_mut().for_each(|b| *b = rng.gen::<f64>() < params.subsample);
                for (b, s) in bag.iter_mut().zip(&sorted) {
                    b.clear();
                    b.extend(s.iter().copied().filter(|&i| in_bag[i as usize]));
                }
                bag_ranks = gather(&bag);
            }
            let mut trees = Vec::with_capacity(k);
            for c in 0..k {
                for (i, v) in gh.iter_mut().enumerate() {
                    let p = prob[i * k + c];
                    let y = if labels[i] == c { 1.0 } else { 0.0 };
                    *v = [p - y, (2.0 * p * (1.0 - p)).max(1e-16)];
                }
                let tree = if bag[0].is_empty() {
                    Tree { nodes: vec![Node::Leaf { value: 0.0 }] }
                } else {
                    grow_tree(&ranked.distinct, &bag, &bag_ranks, &gh, params, &mut ws, &mut leaf_of)
                };
                for i in 0..n {
                    let leaf = if in_bag[i] && !bag[0].is_empty() {
                        leaf_of[i] as usize
                    } else {
                        tree.leaf_of(&features[i])
                    };
                    scores[i * k + c] += tree.value(leaf);
                }
                trees.push(tree);
            }
            rounds.push(trees);
        }
        Ok(Self { params: params.clone(), n_classes: k, n_features: d, base_scores, rounds })
    }

    /// Number of trees in the ensemble.
    pub fn n_trees(&self) -> usize {
        self.rounds.iter().map(Vec::len).sum()
    }
}

impl ProbabilisticClassifier for GradientBoostedTrees {
    fn kind(&self) -> &'static str {
        super::GBDT
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: features.len() });
        }
        let mut s = self.base_scores.clone();
        for trees in &self.rounds {
            for (c, t) in trees.iter().enumerate() {
                s[c] += t.predict(features);
            }
        }
        softmax_in_place(&mut s);
        Ok(s)
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("ensemble serializes")
    }
}
