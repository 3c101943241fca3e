//! Lloyd's algorithm in the plane with k-means++ seeding, farthest-point
//! reseeding of empty clusters, and seeded restarts.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

const RESTART_STREAM: u64 = 0x6b6d_7273;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Vec<Point>,
    pub inertia: f64,
    /// Inertia after every centroid update, starting with the first.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

#[inline]
pub(crate) fn sq_dist(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Index of the nearest centroid; ties go to the lowest index.
#[inline]
pub(crate) fn nearest(p: &Point, centroids: &[Point]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = sq_dist(p, &centroids[0]);
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(p, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    (best, best_d)
}

fn plus_plus_init(points: &[Point], k: usize, seed: u64) -> Vec<Point> {
    let mut rng = rng_from_seed(seed);
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first]];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                pick = Some(i);
                if target < w {
                    break;
                }
                target -= w;
            }
            pick.expect("positive total implies a positive weight")
        } else {
            (0..n).find(|&i| !chosen[i]).expect("k <= n")
        };
        chosen[next] = true;
        centroids.push(points[next]);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    centroids
}

fn assign(points: &[Point], centroids: &[Point], labels: &mut [usize]) {
    for (l, p) in labels.iter_mut().zip(points) {
        *l = nearest(p, centroids).0;
    }
}

/// Moves the point farthest from its centroid into each empty cluster.
fn reseed_empty(points: &[Point], centroids: &mut [Point], labels: &mut [usize]) {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            let l = labels[i];
            if sizes[l] <= 1 {
                continue;
            }
            let d = sq_dist(p, &centroids[l]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("n >= k guarantees a donor cluster");
        sizes[labels[i]] -= 1;
        labels[i] = c;
        sizes[c] = 1;
        centroids[c] = points[i];
    }
}

fn update(points: &[Point], labels: &[usize], k: usize) -> Vec<Point> {
    let mut sums = vec![[0.0f64; 2]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        sums[l][0] += p[0];
        sums[l][1] += p[1];
        counts[l] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| [s[0] / c as f64, s[1] / c as f64])
        .collect()
}

pub fn inertia(points: &[Point], labels: &[usize], centroids: &[Point]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum()
}

/// Single seeded k-means run.
pub fn kmeans_fit(points: &[Point], k: usize, seed: u64, max_iter: usize) -> Result<KMeansFit> {
    if k < 1 || points.len() < k {
        return Err(Error::TooFewPoints { required: k.max(1), got: points.len() });
    }
    let mut centroids = plus_plus_init(points, k, seed);
    let mut labels = vec![0usize; points.len()];
    assign(points, &centroids, &mut labels);
    reseed_empty(points, &mut centroids, &mut labels);
    centroids = update(points, &labels, k);
    let mut trace = vec![inertia(points, &labels, &centroids)];
    let mut iterations = 1;
    let mut next = labels.clone();
    while iterations < max_iter {
        assign(points, &centroids, &mut next);
        reseed_empty(points, &mut centroids, &mut next);
        if next == labels {
            break;
        }
        std::mem::swap(&mut labels, &mut next);
        centroids = update(points, &labels, k);
        trace.push(inertia(points, &labels, &centroids));
        iterations += 1;
    }
    Ok(KMeansFit {
        inertia: *trace.last().unwrap(),
        labels,
        centroids,
        inertia_trace: trace,
        iterations,
    })
}

/// Best of `restarts` seeded runs by inertia; ties keep the lowest restart.
pub fn kmeans_best_of(
    points: &[Point],
    k: usize,
    seed: u64,
    max_iter: usize,
    restarts: usize,
) -> Result<KMeansFit> {
    let fits: Vec<KMeansFit> = (0..restarts.max(1) as u64)
        .into_par_iter()
        .map(|r| kmeans_fit(points, k, derive_seed(seed, RESTART_STREAM, r), max_iter))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, f) in fits.iter().enumerate() {
        if f.inertia < fits[best].inertia {
            best = i;
        }
    }
    Ok(fits.into_iter().nth(best).unwrap())
}

/// Mean silhouette coefficient. Singleton clusters contribute 0, as do
/// points with zero intra- and inter-cluster distance.
pub fn silhouette_score(points: &[Point], labels: &[usize], k: usize) -> f64 {
    let n = points.len();
    // Coordinates grouped by cluster so each distance sum is one contiguous pass.
    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut ys: Vec<Vec<f64>> = vec![Vec::new(); k];
    for (p, &l) in points.iter().zip(labels) {
        xs[l].push(p[0]);
        ys[l].push(p[1]);
    }
    let mut mean_dist = vec![0.0; k];
    let mut total = 0.0;
    for (p, &own) in points.iter().zip(labels) {
        if xs[own].len() <= 1 {
            continue;
        }
        for c in 0..k {
            let size = xs[c].len();
            mean_dist[c] = if size == 0 {
                f64::INFINITY
            } else {
                let divisor = if c == own { size - 1 } else { size };
                distance_sum(p, &xs[c], &ys[c]) / divisor as f64
            };
        }
        let a = mean_dist[own];
        let b = (0..k).filter(|&c| c != own).map(|c| mean_dist[c]).fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 && b.is_finite() {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

/// Sum of Euclidean distances from `p` to every `(xs[j], ys[j])`.
fn distance_sum(p: &Point, xs: &[f64], ys: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (xc, yc) = (xs.chunks_exact(4), ys.chunks_exact(4));
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (x4, y4) in xc.zip(yc) {
        for l in 0..4 {
            let (dx, dy) = (p[0] - x4[l], p[1] - y4[l]);
            acc[l] += (dx * dx + dy * dy).sqrt();
        }
    }
    for (x, y) in xr.iter().zip(yr) {
        let (dx, dy) = (p[0] - x, p[1] - y);
        acc[0] += (dx * dx + dy * dy).sqrt();
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}
