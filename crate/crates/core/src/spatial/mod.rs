//! Neighborhood imputers over block centroids: inverse distance weighting and
//! spatial k-nearest-neighbor averaging.

mod kdtree;

pub use kdtree::{Neighbor, SpatialIndex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlockTable, Feature, Imputation, TargetPair};

/// Neighbors closer than this (meters) count as coincident.
pub const COINCIDENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdwConfig {
    pub power: f64,
    pub k: usize,
}

impl Default for IdwConfig {
    fn default() -> Self {
        Self { power: 2.0, k: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SknnConfig {
    pub k: usize,
}

impl Default for SknnConfig {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// Index over blocks whose `feature` is observed.
pub fn observed_index(table: &BlockTable, feature: Feature) -> SpatialIndex {
    SpatialIndex::new(
        table
            .iter()
            .enumerate()
            .filter(|(_, r)| r.target(feature).is_some())
            .map(|(i, r)| (r.id.clone(), [r.centroid.0, r.centroid.1], i))
            .collect(),
    )
}

/// Fills every missing target with `estimate(index, row, feature)`, passing
/// observed components through.
fn neighborhood_impute<F>(table: &BlockTable, estimate: F) -> Result<Imputation>
where
    F: Fn(&SpatialIndex, [f64; 2], Feature) -> Result<f64>,
{
    let indices = [observed_index(table, Feature::Fsi), observed_index(table, Feature::Gsi)];
    if indices.iter().all(SpatialIndex::is_empty) {
        return Err(Error::EmptyIndex);
    }
    let mut out = Imputation::new();
    for r in table.iter().filter(|r| !r.is_complete()) {
        let mut pair = TargetPair::default();
        for (f, index) in Feature::BOTH.into_iter().zip(&indices) {
            let v = match r.target(f) {
                Some(v) => v,
                None => estimate(index, [r.centroid.0, r.centroid.1], f)?,
            };
            pair.set(f, v);
        }
        out.insert(r.id.clone(), pair);
    }
    Ok(out)
}

fn observed(table: &BlockTable, n: &Neighbor<'_>, f: Feature) -> f64 {
    table.records()[n.row].target(f).expect("index holds observed blocks only")
}

/// Inverse-distance weighted mean over the `k` nearest observed blocks.
pub fn idw_impute(table: &BlockTable, config: &IdwConfig) -> Result<Imputation> {
    if config.k == 0 || !config.power.is_finite() || config.power < 0.0 {
        return Err(Error::InvalidConfig(format!("invalid idw parameters {config:?}")));
    }
    neighborhood_impute(table, |index, at, f| {
        let nbrs = index.knn_query(at, config.k)?;
        if let Some(hit) = nbrs.iter().find(|n| n.distance < COINCIDENT_EPS) {
            return Ok(observed(table, hit, f));
        }
        let (mut num, mut den) = (0.0, 0.0);
        for n in &nbrs {
            let w = n.distance.powf(-config.power);
            num += w * observed(table, n, f);
            den += w;
        }
        Ok(num / den)
    })
}

/// Unweighted mean over the `k` nearest observed blocks.
pub fn sknn_impute(table: &BlockTable, config: &SknnConfig) -> Result<Imputation> {
    if config.k == 0 {
        return Err(Error::InvalidConfig("sknn.k must be >= 1".into()));
    }
    neighborhood_impute(table, |index, at, f| {
        let nbrs = index.knn_query(at, config.k)?;
        Ok(nbrs.iter().map(|n| observed(table, n, f)).sum::<f64>() / nbrs.len() as f64)
    })
}
