//! Spatial autocorrelation, group differences and correlation.

mod special;

pub use special::{f_survival, inc_beta, ln_gamma};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlockRecord, BlockTable, LandUse};
use crate::rng::{derive_seed, rng_from_seed};
use crate::spatial::SpatialIndex;

const PERMUTATION_STREAM: u64 = 0x7065_726d;
/// Smallest accepted permutation count.
pub const MIN_PERMUTATIONS: usize = 99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    /// Neighbors per block in the weight matrix.
    pub weights_k: usize,
    pub n_perm: usize,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self { weights_k: 8, n_perm: 999 }
    }
}

impl StatsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.weights_k == 0 {
            return Err(Error::InvalidConfig("stats.weights_k must be >= 1".into()));
        }
        if self.n_perm < MIN_PERMUTATIONS {
            return Err(Error::InvalidConfig(format!("stats.n_perm must be >= {MIN_PERMUTATIONS}")));
        }
        Ok(())
    }
}

/// Row-standardized spatial weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    /// Neighbors per row (the largest row for a distance band).
    pub k: usize,
    /// Per row, `(column, weight)`; the diagonal is never present.
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SpatialWeights {
    /// Exactly `min(k, n − 1)` neighbors per point; distance ties go to the lower index.
    pub fn knn(points: &[[f64; 2]], k: usize) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(Error::TooFewPoints { required: 2, got: n });
        }
        if k == 0 {
            return Err(Error::InvalidConfig("weights k must be >= 1".into()));
        }
        let index = SpatialIndex::new(points.iter().enumerate().map(|(i, &p)| (format!("{i:012}"), p, i)).collect());
        let kk = k.min(n - 1);
        let rows = points
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let nbrs = index.knn_query(p, kk + 1).expect("index is non-empty");
                let cols: Vec<usize> = nbrs.into_iter().map(|nb| nb.row).filter(|&j| j != i).take(kk).collect();
                let w = 1.0 / cols.len() as f64;
                cols.into_iter().map(|j| (j, w)).collect()
            })
            .collect();
        Ok(Self { k, rows })
    }

    /// Every other point within `radius` (inclusive), row-standardized.
    /// Points without neighbors keep an empty row. On a unit lattice with
    /// `radius = 1` this is the rook neighborhood.
    pub fn distance_band(points: &[[f64; 2]], radius: f64) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(Error::TooFewPoints { required: 2, got: n });
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidConfig(format!("band radius must be positive, got {radius}")));
        }
        let r2 = radius * radius;
        let rows: Vec<Vec<(usize, f64)>> = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let cols: Vec<usize> = (0..n)
                    .filter(|&j| j != i && (points[j][0] - p[0]).powi(2) + (points[j][1] - p[1]).powi(2) <= r2)
                    .collect();
                let w = 1.0 / cols.len().max(1) as f64;
                cols.into_iter().map(|j| (j, w)).collect()
            })
            .collect();
        if rows.iter().all(Vec::is_empty) {
            return Err(Error::InvalidConfig(format!("no pair of points lies within {radius}")));
        }
        let k = rows.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self { k, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.rows.iter().flatten().map(|&(_, w)| w).sum()
    }
}

fn centered(values: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let z: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let ss: f64 = z.iter().map(|v| v * v).sum();
    let scale: f64 = values.iter().map(|v| v * v).sum();
    if ss <= 1e-24 * scale || ss == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((z, ss))
}

fn moran_from_centered(z: &[f64], ss: f64, weights: &SpatialWeights, s0: f64) -> f64 {
    let num: f64 = weights
        .rows
        .iter()
        .zip(z)
        .map(|(row, &zi)| zi * row.iter().map(|&(j, w)| w * z[j]).sum::<f64>())
        .sum();
    z.len() as f64 / s0 * num / ss
}

fn check_moran(values: &[f64], weights: &SpatialWeights) -> Result<()> {
    if values.len() < 3 {
        return Err(Error::TooFewPoints { required: 3, got: values.len() });
    }
    if values.len() != weights.len() {
        return Err(Error::LengthMismatch(values.len(), weights.len()));
    }
    Ok(())
}

pub fn morans_i(values: &[f64], weights: &SpatialWeights) -> Result<f64> {
    check_moran(values, weights)?;
    let (z, ss) = centered(values)?;
    Ok(moran_from_centered(&z, ss, weights, weights.total_weight()))
}

/// Moran's I with a one-sided permutation p-value, `(1 + #{I* ≥ I}) / (1 + n_perm)`.
pub fn morans_i_permutation_p(values: &[f64], weights: &SpatialWeights, n_perm: usize, seed: u64) -> Result<(f64, f64)> {
    check_moran(values, weights)?;
    if n_perm < MIN_PERMUTATIONS {
        return Err(Error::InvalidConfig(format!("n_perm must be >= {MIN_PERMUTATIONS}, got {n_perm}")));
    }
    let (z, ss) = centered(values)?;
    let s0 = weights.total_weight();
    let observed = moran_from_centered(&z, ss, weights, s0);
    let exceed = (0..n_perm)
        .into_par_iter()
        .map(|p| {
            let mut perm = z.clone();
            perm.shuffle(&mut rng_from_seed(derive_seed(seed, PERMUTATION_STREAM, p as u64)));
            usize::from(moran_from_centered(&perm, ss, weights, s0) >= observed)
        })
        .sum::<usize>();
    Ok((observed, (1 + exceed) as f64 / (1 + n_perm) as f64))
}

/// Category with the largest share; ties go to the earlier category.
/// `None` when no share is positive.
pub fn dominant_group(record: &BlockRecord) -> Option<LandUse> {
    let mut best: Option<(LandUse, f64)> = None;
    for lu in LandUse::ALL {
        let s = record.share(lu);
        if s > 0.0 && best.is_none_or(|(_, b)| s > b) {
            best = Some((lu, s));
        }
    }
    best.map(|(lu, _)| lu)
}

/// One-way ANOVA: `(F, p)`.
pub fn anova_f(groups: &[Vec<f64>]) -> Result<(f64, f64)> {
    if groups.len() < 2 {
        return Err(Error::DegenerateGroups(format!("need at least 2 groups, got {}", groups.len())));
    }
    if let Some(g) = groups.iter().position(|g| g.len() < 2) {
        return Err(Error::DegenerateGroups(format!("group {g} has fewer than 2 values")));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand) * (m - grand);
        ssw += g.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    }
    if ssb + ssw <= 0.0 {
        return Err(Error::DegenerateGroups("total variance is zero".into()));
    }
    let d1 = (groups.len() - 1) as f64;
    let d2 = (n - groups.len()) as f64;
    let f = if ssw == 0.0 { f64::INFINITY } else { (ssb / d1) / (ssw / d2) };
    Ok((f, f_survival(f, d1, d2)))
}

/// Sample correlation, clamped to [−1, 1].
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::TooFewPoints { required: 2, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub anova_f: f64,
    pub anova_p: f64,
    pub morans_i: f64,
    pub morans_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_blocks: usize,
    /// Blocks excluded from ANOVA because no share was positive.
    pub n_undetermined: usize,
    /// Group sizes by dominant land use, in category order.
    pub group_sizes: Vec<(String, usize)>,
    pub fsi: TargetStats,
    pub gsi: TargetStats,
    pub pearson: Vec<(String, String, f64)>,
    pub weights_k: usize,
    pub n_perm: usize,
    pub seed: u64,
}

/// Statistics over blocks with both targets observed.
pub fn stats_report(table: &BlockTable, config: &StatsConfig, seed: u64) -> Result<StatsReport> {
    config.validate()?;
    let rows: Vec<&BlockRecord> = table.iter().filter(|r| r.is_complete()).collect();
    let fsi: Vec<f64> = rows.iter().map(|r| r.fsi.unwrap()).collect();
    let gsi: Vec<f64> = rows.iter().map(|r| r.gsi.unwrap()).collect();
    let area: Vec<f64> = rows.iter().map(|r| r.site_area).collect();
    let points: Vec<[f64; 2]> = rows.iter().map(|r| [r.centroid.0, r.centroid.1]).collect();
    let weights = SpatialWeights::knn(&points, config.weights_k)?;

    let groups: Vec<Option<LandUse>> = rows.iter().map(|r| dominant_group(r)).collect();
    let n_undetermined = groups.iter().filter(|g| g.is_none()).count();
    let group_sizes: Vec<(String, usize)> = LandUse::ALL
        .iter()
        .map(|&lu| (lu.name().to_string(), groups.iter().filter(|g| **g == Some(lu)).count()))
        .collect();
    let anova_for = |values: &[f64]| {
        let by_group: Vec<Vec<f64>> = LandUse::ALL
            .iter()
            .map(|&lu| groups.iter().zip(values).filter(|(g, _)| **g == Some(lu)).map(|(_, &v)| v).collect())
            .filter(|g: &Vec<f64>| g.len() >= 2)
            .collect();
        anova_f(&by_group)
    };
    let target = |values: &[f64], stream: u64| -> Result<TargetStats> {
        let (anova_f, anova_p) = anova_for(values)?;
        let (morans_i, morans_p) =
            morans_i_permutation_p(values, &weights, config.n_perm, derive_seed(seed, stream, 0))?;
        Ok(TargetStats { anova_f, anova_p, morans_i, morans_p })
    };
    let fsi_stats = target(&fsi, 1)?;
    let gsi_stats = target(&gsi, 2)?;
    let pearson = vec![
        ("fsi".into(), "gsi".into(), pearson_r(&fsi, &gsi)?),
        ("fsi".into(), "site_area".into(), pearson_r(&fsi, &area)?),
        ("gsi".into(), "site_area".into(), pearson_r(&gsi, &area)?),
    ];
    Ok(StatsReport {
        n_blocks: rows.len(),
        n_undetermined,
        group_sizes,
        fsi: fsi_stats,
        gsi: gsi_stats,
        pearson,
        weights_k: config.weights_k,
        n_perm: config.n_perm,
        seed,
    })
}
