//! Synthetic city generator.
//!
//! Blocks are scattered uniformly over a square. Voronoi patches around
//! random seed points each receive one morphological regime; FSI and GSI are
//! drawn log-normally around the regime center, modulated by a smooth
//! spatial field, and land-use shares come from a regime-specific Dirichlet.
//! Both targets are finally rescaled so their means hit the configured values.

use rand::Rng;
use rand_distr::{Dirichlet, Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlockRecord, BlockTable, N_SHARES};
use crate::rng::{derive_seed, rng_from_seed};

/// Regime centers: (GSI median, FSI median, dominant land-use index).
const REGIMES: [(f64, f64, usize); 7] = [
    (0.22, 1.10, 0), // mid-rise residential
    (0.015, 0.02, 1), // parks
    (0.30, 1.60, 2), // business core
    (0.25, 0.35, 3), // industry
    (0.04, 0.06, 4), // rail and roads
    (0.12, 0.25, 5), // special use
    (0.08, 0.12, 6), // agricultural and dacha
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_blocks: usize,
    /// Between 2 and 7.
    pub n_regimes: usize,
    /// Typical regime patch diameter, meters.
    pub spatial_scale: f64,
    /// Log-scale standard deviation of FSI and GSI around the regime center.
    pub noise: f64,
    /// Amplitude (log scale) of the smooth spatial modulation.
    pub smooth_noise: f64,
    /// Correlation of the FSI and GSI log-noise terms.
    pub noise_correlation: f64,
    /// Dirichlet weight of the dominant category; the others get 0.3.
    pub share_concentration: f64,
    pub target_fsi_mean: f64,
    pub target_gsi_mean: f64,
    /// Site area is log-normal with these log-scale parameters.
    pub area_log_mean: f64,
    pub area_log_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_blocks: 5000,
            n_regimes: 5,
            spatial_scale: 2500.0,
            noise: 0.45,
            smooth_noise: 0.3,
            noise_correlation: 0.77,
            share_concentration: 4.0,
            target_fsi_mean: 0.377,
            target_gsi_mean: 0.110,
            area_log_mean: 10.896,
            area_log_sd: 1.41,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("synth.{m}")));
        if self.n_blocks < 50 {
            return bad("n_blocks must be >= 50");
        }
        if !(2..=REGIMES.len()).contains(&self.n_regimes) {
            return bad("n_regimes must lie in [2, 7]");
        }
        if !(self.spatial_scale > 0.0) {
            return bad("spatial_scale must be positive");
        }
        if !(self.noise >= 0.0 && self.smooth_noise >= 0.0 && self.area_log_sd >= 0.0) {
            return bad("noise levels must be nonnegative");
        }
        if !(-1.0..=1.0).contains(&self.noise_correlation) {
            return bad("noise_correlation must lie in [-1, 1]");
        }
        if !(self.share_concentration > 0.0) {
            return bad("share_concentration must be positive");
        }
        if !(self.target_fsi_mean > 0.0 && self.target_gsi_mean > 0.0) {
            return bad("target means must be positive");
        }
        if !self.area_log_mean.is_finite() {
            return bad("area_log_mean must be finite");
        }
        Ok(())
    }

    fn mean_area(&self) -> f64 {
        (self.area_log_mean + 0.5 * self.area_log_sd * self.area_log_sd).exp()
    }
}

/// Smooth field: a sum of plane waves with wavelengths of a few patch sizes.
struct Waves(Vec<([f64; 2], f64)>);

impl Waves {
    fn new(rng: &mut impl Rng, scale: f64, n: usize) -> Self {
        let waves = (0..n)
            .map(|_| {
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                let wavelength = scale * rng.gen_range(1.0..4.0);
                let f = std::f64::consts::TAU / wavelength;
                ([f * theta.cos(), f * theta.sin()], rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        Self(waves)
    }

    /// Roughly unit variance.
    fn at(&self, p: [f64; 2]) -> f64 {
        let s: f64 = self.0.iter().map(|(k, phase)| (k[0] * p[0] + k[1] * p[1] + phase).cos()).sum();
        s * (2.0 / self.0.len() as f64).sqrt()
    }
}

/// A complete table and the regime index of every block.
pub fn generate_city(config: &SynthConfig) -> Result<(BlockTable, Vec<usize>)> {
    config.validate()?;
    let n = config.n_blocks;
    let side = (n as f64 * config.mean_area()).sqrt();
    let stream = |s| rng_from_seed(derive_seed(config.seed, s, 0));

    let mut rng = stream(1);
    let centroids: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen_range(0.0..side), rng.gen_range(0.0..side)]).collect();

    // Patch seeds; every regime is guaranteed at least one patch.
    let mut rng = stream(2);
    let n_patches = ((side / config.spatial_scale).powi(2).round() as usize).max(config.n_regimes);
    let patches: Vec<([f64; 2], usize)> = (0..n_patches)
        .map(|i| {
            let regime = if i < config.n_regimes { i } else { rng.gen_range(0..config.n_regimes) };
            ([rng.gen_range(0.0..side), rng.gen_range(0.0..side)], regime)
        })
        .collect();
    let labels: Vec<usize> = centroids
        .iter()
        .map(|c| {
            let mut best = (f64::INFINITY, 0);
            for (p, r) in &patches {
                let d = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                if d < best.0 {
                    best = (d, *r);
                }
            }
            best.1
        })
        .collect();

    let mut rng = stream(3);
    let waves = Waves::new(&mut rng, config.spatial_scale, 8);
    let rho = config.noise_correlation;
    let mut fsi = Vec::with_capacity(n);
    let mut gsi = Vec::with_capacity(n);
    for (c, &r) in centroids.iter().zip(&labels) {
        let (g0, f0, _) = REGIMES[r];
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let smooth = config.smooth_noise * waves.at(*c);
        let ng = config.noise * e1;
        let nf = config.noise * (rho * e1 + (1.0 - rho * rho).sqrt() * e2);
        gsi.push(g0 * (smooth + ng).exp());
        fsi.push(f0 * (smooth + nf).exp());
    }
    let rescale = |v: &mut Vec<f64>, target: f64| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        for x in v.iter_mut() {
            *x *= target / mean;
        }
    };
    rescale(&mut fsi, config.target_fsi_mean);
    rescale(&mut gsi, config.target_gsi_mean);

    let mut rng = stream(4);
    let dirichlets: Vec<Dirichlet<f64>> = (0..config.n_regimes)
        .map(|r| {
            let mut alpha = [0.3; N_SHARES];
            alpha[REGIMES[r].2] = config.share_concentration;
            Dirichlet::new(&alpha).expect("positive concentration")
        })
        .collect();
    let area = LogNormal::new(config.area_log_mean, config.area_log_sd).expect("finite parameters");
    let records = (0..n)
        .map(|i| {
            let s = dirichlets[labels[i]].sample(&mut rng);
            let mut shares = [0.0; N_SHARES];
            shares.copy_from_slice(&s);
            BlockRecord {
                id: format!("blk{i:06}"),
                centroid: (centroids[i][0], centroids[i][1]),
                shares,
                site_area: area.sample(&mut rng),
                fsi: Some(fsi[i]),
                gsi: Some(gsi[i]),
            }
        })
        .collect();
    Ok((BlockTable::new(records), labels))
}
