//! Run configuration shared by the CLI and the benchmark harness.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::ClassifierConfig;
use crate::error::{Error, Result};
use crate::evaluation::BenchmarkConfig;
use crate::hybrid::HybridConfig;
use crate::morphology::ClusteringConfig;
use crate::smvnmf::NmfConfig;
use crate::spatial::{IdwConfig, SknnConfig};
use crate::stats::StatsConfig;
use crate::synth::SynthConfig;

/// Every tunable in one document. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; absent means "take it from the command line or environment".
    pub seed: Option<u64>,
    /// Method used by `impute`.
    pub method: Option<String>,
    pub clustering: ClusteringConfig,
    pub classifier: ClassifierConfig,
    pub idw: IdwConfig,
    pub sknn: SknnConfig,
    pub smvnmf: NmfConfig,
    pub hybrid: HybridConfig,
    pub evaluate: BenchmarkConfig,
    pub stats: StatsConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.clustering.validate()?;
        self.classifier.gbdt.validate()?;
        self.smvnmf.validate()?;
        if !(0.0..=1.0).contains(&self.hybrid.alpha) {
            return Err(Error::InvalidConfig(format!("hybrid.alpha must lie in [0, 1], got {}", self.hybrid.alpha)));
        }
        if self.idw.k == 0 || self.sknn.k == 0 {
            return Err(Error::InvalidConfig("idw.k and sknn.k must be >= 1".into()));
        }
        self.evaluate.validate()?;
        self.stats.validate()?;
        self.synth.validate()?;
        Ok(())
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        config_hash(&serde_json::to_value(self).expect("config serializes"))
    }
}

pub fn config_hash(value: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(value).expect("json serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}
