//! Morphological clustering of observed blocks in standardized (FSI, GSI)
//! space, and per-cluster median profiles.

mod kmeans;
mod standardize;

pub use kmeans::{inertia, kmeans_best_of, kmeans_fit, silhouette_score, KMeansFit, Point};
pub use standardize::Standardizer;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{BlockTable, TargetPair};
use crate::rng::{derive_seed, rng_from_seed};

const SELECT_STREAM: u64 = 0x73656c;
const SAMPLE_STREAM: u64 = 0x736d706c;

/// Cluster count: fixed, or chosen by silhouette over a range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KSetting {
    Auto,
    Fixed(usize),
}

impl Serialize for KSetting {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            KSetting::Auto => s.serialize_str("auto"),
            KSetting::Fixed(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for KSetting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(k) => Ok(KSetting::Fixed(k as usize)),
            Raw::S(s) if s == "auto" => Ok(KSetting::Auto),
            Raw::S(s) => s
                .parse::<usize>()
                .map(KSetting::Fixed)
                .map_err(|_| serde::de::Error::custom(format!("expected `auto` or an integer, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringConfig {
    pub k: KSetting,
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub max_iter: usize,
    /// Silhouette is evaluated on at most this many observed points.
    pub silhouette_sample: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self { k: KSetting::Auto, k_min: 4, k_max: 12, restarts: 10, max_iter: 300, silhouette_sample: 2000 }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if let KSetting::Fixed(k) = self.k {
            if k < 2 {
                return Err(Error::InvalidConfig(format!("clustering.k must be >= 2, got {k}")));
            }
        }
        if self.k_min < 2 || self.k_max < self.k_min {
            return Err(Error::InvalidConfig(format!(
                "clustering range [{}, {}] must satisfy 2 <= k_min <= k_max",
                self.k_min, self.k_max
            )));
        }
        if self.max_iter == 0 || self.silhouette_sample < 2 {
            return Err(Error::InvalidConfig("clustering.max_iter must be >= 1 and silhouette_sample >= 2".into()));
        }
        Ok(())
    }
}

/// Fitted morphology: standardization, centroids, and per-cluster medians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub standardizer: Standardizer,
    /// Centroids in standardized space.
    pub centroids: Vec<Point>,
    /// Component-wise medians in original units.
    pub medians: Vec<TargetPair>,
    pub k: usize,
    pub inertia: f64,
    pub sizes: Vec<usize>,
    pub seed: u64,
}

impl ClusterModel {
    /// Nearest centroid in standardized space; ties go to the lowest label.
    pub fn assign_cluster(&self, pair: TargetPair) -> usize {
        kmeans::nearest(&self.standardizer.transform(pair), &self.centroids).0
    }
}

/// Lower median (element `(n - 1) / 2` of the sorted values).
pub fn lower_median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.total_cmp(b));
    values[(values.len() - 1) / 2]
}

/// Silhouette-maximizing cluster count over `[k_min, k_max]`, one seeded fit
/// per candidate. Ties go to the smaller k. Returns the chosen k and all scores.
pub fn select_k(
    points: &[Point],
    k_min: usize,
    k_max: usize,
    seed: u64,
    max_iter: usize,
    sample_cap: usize,
) -> Result<(usize, Vec<(usize, f64)>)> {
    if k_min < 2 || k_max < k_min {
        return Err(Error::InvalidConfig(format!("invalid k range [{k_min}, {k_max}]")));
    }
    if points.len() <= k_max {
        return Err(Error::TooFewPoints { required: k_max + 1, got: points.len() });
    }
    let sample: Option<Vec<usize>> = (points.len() > sample_cap).then(|| {
        let mut rng = rng_from_seed(derive_seed(seed, SAMPLE_STREAM, 0));
        let mut idx = rand::seq::index::sample(&mut rng, points.len(), sample_cap).into_vec();
        idx.sort_unstable();
        idx
    });
    let mut scores = Vec::with_capacity(k_max - k_min + 1);
    for k in k_min..=k_max {
        let fit = kmeans_fit(points, k, derive_seed(seed, SELECT_STREAM, k as u64), max_iter)?;
        let score = match &sample {
            Some(idx) => {
                let pts: Vec<Point> = idx.iter().map(|&i| points[i]).collect();
                let labels: Vec<usize> = idx.iter().map(|&i| fit.labels[i]).collect();
                silhouette_score(&pts, &labels, k)
            }
            None => silhouette_score(points, &fit.labels, k),
        };
        scores.push((k, score));
    }
    let mut best = scores[0];
    for &(k, s) in &scores[1..] {
        if s > best.1 {
            best = (k, s);
        }
    }
    Ok((best.0, scores))
}

/// Result of clustering the observed blocks of a table.
#[derive(Debug, Clone)]
pub struct ClusterFit {
    pub model: ClusterModel,
    /// Row indices of the observed blocks used for fitting.
    pub rows: Vec<usize>,
    /// Cluster label of each row in `rows`.
    pub labels: Vec<usize>,
}

/// Clusters the blocks whose FSI and GSI are both observed.
pub fn fit_cluster_model(table: &BlockTable, config: &ClusteringConfig, seed: u64) -> Result<ClusterFit> {
    config.validate()?;
    let rows = table.complete_indices();
    let pairs: Vec<TargetPair> = rows.iter().map(|&i| table.records()[i].targets().unwrap()).collect();
    let required = match config.k {
        KSetting::Fixed(k) => k.max(10),
        KSetting::Auto => (config.k_max + 1).max(10),
    };
    if pairs.len() < required {
        return Err(Error::TooFewObserved { required, got: pairs.len() });
    }
    let standardizer = Standardizer::fit(&pairs)?;
    let points: Vec<Point> = pairs.iter().map(|&p| standardizer.transform(p)).collect();
    let k = match config.k {
        KSetting::Fixed(k) => k,
        KSetting::Auto => {
            select_k(&points, config.k_min, config.k_max, seed, config.max_iter, config.silhouette_sample)?.0
        }
    };
    let fit = kmeans_best_of(&points, k, seed, config.max_iter, config.restarts)?;
    let mut medians = Vec::with_capacity(k);
    let mut sizes = Vec::with_capacity(k);
    for c in 0..k {
        let mut fsi: Vec<f64> = Vec::new();
        let mut gsi: Vec<f64> = Vec::new();
        for (p, &l) in pairs.iter().zip(&fit.labels) {
            if l == c {
                fsi.push(p.fsi);
                gsi.push(p.gsi);
            }
        }
        sizes.push(fsi.len());
        medians.push(TargetPair::new(lower_median(&mut fsi), lower_median(&mut gsi)));
    }
    let model = ClusterModel {
        standardizer,
        centroids: fit.centroids,
        medians,
        k,
        inertia: fit.inertia,
        sizes,
        seed,
    };
    Ok(ClusterFit { model, rows, labels: fit.labels })
}
