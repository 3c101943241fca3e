//! The spatial-morphological imputer: cluster observed blocks in (FSI, GSI)
//! space, learn cluster membership from land use and site area, and impute
//! missing blocks as probability-weighted cluster medians.

use crate::classifier::{
    build_features, fit_classifier, weighted_impute, ClassifierConfig, FeatureVector, ProbabilisticClassifier,
};
use crate::error::Result;
use crate::model::{BlockTable, Imputation, TargetPair};
use crate::morphology::{fit_cluster_model, ClusterModel, ClusteringConfig};
use crate::rng::derive_seed;

const CLUSTER_STREAM: u64 = 1;
const CLASSIFIER_STREAM: u64 = 2;

/// Fitted cluster model plus classifier.
#[derive(Debug)]
pub struct SmModel {
    pub clusters: ClusterModel,
    pub classifier: Box<dyn ProbabilisticClassifier>,
}

/// Per-block prediction details.
#[derive(Debug, Clone, PartialEq)]
pub struct SmPrediction {
    pub proba: Vec<f64>,
    pub cluster: usize,
    pub value: TargetPair,
}

impl SmModel {
    /// Fits on the blocks with both targets observed. Missing blocks are never read.
    pub fn fit(
        table: &BlockTable,
        clustering: &ClusteringConfig,
        classifier: &ClassifierConfig,
        seed: u64,
    ) -> Result<Self> {
        let fit = fit_cluster_model(table, clustering, derive_seed(seed, CLUSTER_STREAM, 0))?;
        let features: Vec<FeatureVector> = fit.rows.iter().map(|&i| build_features(&table.records()[i])).collect();
        let model = fit_classifier(
            &features,
            &fit.labels,
            fit.model.k,
            classifier,
            derive_seed(seed, CLASSIFIER_STREAM, 0),
        )?;
        Ok(Self { clusters: fit.model, classifier: model })
    }

    pub fn predict(&self, features: &FeatureVector) -> Result<SmPrediction> {
        let proba = self.classifier.predict_proba(features.as_slice())?;
        let value = weighted_impute(&proba, &self.clusters)?;
        let mut cluster = 0;
        for (c, &p) in proba.iter().enumerate() {
            if p > proba[cluster] {
                cluster = c;
            }
        }
        Ok(SmPrediction { proba, cluster, value })
    }

    /// Fills every incomplete block; observed components pass through.
    pub fn impute(&self, table: &BlockTable) -> Result<Imputation> {
        let mut out = Imputation::new();
        for r in table.iter().filter(|r| !r.is_complete()) {
            let p = self.predict(&build_features(r))?.value;
            out.insert(r.id.clone(), TargetPair::new(r.fsi.unwrap_or(p.fsi), r.gsi.unwrap_or(p.gsi)));
        }
        Ok(out)
    }
}

/// Full fit-and-fill workflow. A table without missing blocks yields an empty map.
pub fn sm_impute(
    table: &BlockTable,
    clustering: &ClusteringConfig,
    classifier: &ClassifierConfig,
    seed: u64,
) -> Result<Imputation> {
    if table.incomplete_indices().is_empty() {
        return Ok(Imputation::new());
    }
    SmModel::fit(table, clustering, classifier, seed)?.impute(table)
}
