//! Convex combination of two imputations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Imputation, TargetPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridConfig {
    /// Weight on the first (morphological) prediction.
    pub alpha: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self { alpha: 0.5 }
    }
}

/// `alpha · a + (1 − alpha) · b`, per block and feature.
pub fn hybrid_impute(a: &Imputation, b: &Imputation, alpha: f64) -> Result<Imputation> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("hybrid.alpha must lie in [0, 1], got {alpha}")));
    }
    if let Some(id) = a.keys().find(|k| !b.contains_key(*k)).or_else(|| b.keys().find(|k| !a.contains_key(*k))) {
        return Err(Error::KeyMismatch(id.clone()));
    }
    let mix = |x: f64, y: f64| {
        if alpha == 1.0 {
            x
        } else if alpha == 0.0 {
            y
        } else {
            alpha * x + (1.0 - alpha) * y
        }
    };
    Ok(a.iter()
        .map(|(id, pa)| {
            let pb = &b[id];
            (id.clone(), TargetPair::new(mix(pa.fsi, pb.fsi), mix(pa.gsi, pb.gsi)))
        })
        .collect())
}
