use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TargetPair;

/// Per-feature z-scoring of (FSI, GSI) with population statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean_fsi: f64,
    pub mean_gsi: f64,
    pub std_fsi: f64,
    pub std_gsi: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Standardizer {
    pub fn fit(pairs: &[TargetPair]) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::TooFewPoints { required: 2, got: pairs.len() });
        }
        let (mean_fsi, std_fsi) = mean_std(pairs.iter().map(|p| p.fsi));
        let (mean_gsi, std_gsi) = mean_std(pairs.iter().map(|p| p.gsi));
        if !(std_fsi > 1e-12 * mean_fsi.abs().max(1.0)) {
            return Err(Error::ConstantFeature("fsi"));
        }
        if !(std_gsi > 1e-12 * mean_gsi.abs().max(1.0)) {
            return Err(Error::ConstantFeature("gsi"));
        }
        Ok(Self { mean_fsi, mean_gsi, std_fsi, std_gsi })
    }

    pub fn transform(&self, p: TargetPair) -> [f64; 2] {
        [(p.fsi - self.mean_fsi) / self.std_fsi, (p.gsi - self.mean_gsi) / self.std_gsi]
    }

    pub fn inverse_transform(&self, z: [f64; 2]) -> TargetPair {
        TargetPair::new(z[0] * self.std_fsi + self.mean_fsi, z[1] * self.std_gsi + self.mean_gsi)
    }
}
