//! Probabilistic cluster classifiers and probability-weighted imputation.
//!
//! Classifier families are interchangeable strategies: each one implements
//! [`ClassifierTrainer`] and is looked up by name in a [`ClassifierRegistry`].

mod gbdt;
mod logistic;

pub use gbdt::{GbdtParams, GradientBoostedTrees};
pub use logistic::{LogisticModel, LogisticParams};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlockRecord, TargetPair, N_SHARES};
use crate::morphology::ClusterModel;

pub const GBDT: &str = "gbdt";
pub const LOGISTIC: &str = "logistic";

/// Seven land-use shares followed by log10 of the clamped site area.
pub const N_FEATURES: usize = N_SHARES + 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn build_features(record: &BlockRecord) -> FeatureVector {
    let mut v = [0.0; N_FEATURES];
    v[..N_SHARES].copy_from_slice(&record.shares);
    v[N_SHARES] = record.site_area.max(1.0).log10();
    FeatureVector(v)
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    for x in v.iter_mut() {
        *x /= s;
    }
}

pub(crate) fn check_labels(features: &[Vec<f64>], labels: &[usize], k: usize) -> Result<()> {
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch(features.len(), labels.len()));
    }
    if features.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = features[0].len();
    if let Some(x) = features.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 classes, got {k}")));
    }
    if features.len() < 10 * k {
        return Err(Error::TooFewPoints { required: 10 * k, got: features.len() });
    }
    let mut present = vec![false; k];
    for &l in labels {
        if l >= k {
            return Err(Error::InvalidConfig(format!("label {l} out of range for {k} classes")));
        }
        present[l] = true;
    }
    match present.iter().position(|&p| !p) {
        Some(c) => Err(Error::MissingClass(c)),
        None => Ok(()),
    }
}

/// A fitted model mapping block features to a distribution over clusters.
pub trait ProbabilisticClassifier: Send + Sync + fmt::Debug {
    fn kind(&self) -> &'static str;
    fn n_classes(&self) -> usize;
    /// Length-`n_classes` probability vector.
    fn predict_proba(&self, features: &[f64]) -> Result<Vec<f64>>;
    fn to_json(&self) -> serde_json::Value;
}

/// A classifier family: trains new models and restores saved ones.
pub trait ClassifierTrainer: Send + Sync {
    fn kind(&self) -> &'static str;
    fn fit(
        &self,
        features: &[Vec<f64>],
        labels: &[usize],
        n_classes: usize,
        seed: u64,
    ) -> Result<Box<dyn ProbabilisticClassifier>>;
    fn load(&self, doc: &serde_json::Value) -> Result<Box<dyn ProbabilisticClassifier>>;
}

struct GbdtTrainer(GbdtParams);

impl ClassifierTrainer for GbdtTrainer {
    fn kind(&self) -> &'static str {
        GBDT
    }

    fn fit(&self, x: &[Vec<f64>], y: &[usize], k: usize, seed: u64) -> Result<Box<dyn ProbabilisticClassifier>> {
        Ok(Box::new(GradientBoostedTrees::fit(x, y, k, &self.0, seed)?))
    }

    fn load(&self, doc: &serde_json::Value) -> Result<Box<dyn ProbabilisticClassifier>> {
        let m: GradientBoostedTrees = serde_json::from_value(doc.clone())
            .map_err(|e| Error::Parse { locus: "classifier".into(), message: e.to_string() })?;
        Ok(Box::new(m))
    }
}

struct LogisticTrainer(LogisticParams);

impl ClassifierTrainer for LogisticTrainer {
    fn kind(&self) -> &'static str {
        LOGISTIC
    }

    fn fit(&self, x: &[Vec<f64>], y: &[usize], k: usize, _seed: u64) -> Result<Box<dyn ProbabilisticClassifier>> {
        Ok(Box::new(LogisticModel::fit(x, y, k, &self.0)?))
    }

    fn load(&self, doc: &serde_json::Value) -> Result<Box<dyn ProbabilisticClassifier>> {
        let m: LogisticModel = serde_json::from_value(doc.clone())
            .map_err(|e| Error::Parse { locus: "classifier".into(), message: e.to_string() })?;
        Ok(Box::new(m))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub kind: String,
    pub gbdt: GbdtParams,
    pub logistic: LogisticParams,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { kind: GBDT.into(), gbdt: GbdtParams::default(), logistic: LogisticParams::default() }
    }
}

/// Named classifier families.
pub struct ClassifierRegistry {
    trainers: BTreeMap<&'static str, Box<dyn ClassifierTrainer>>,
}

impl ClassifierRegistry {
    pub fn empty() -> Self {
        Self { trainers: BTreeMap::new() }
    }

    /// Registry holding the built-in families parameterized from `config`.
    pub fn builtin(config: &ClassifierConfig) -> Self {
        let mut r = Self::empty();
        r.register(Box::new(GbdtTrainer(config.gbdt.clone())));
        r.register(Box::new(LogisticTrainer(config.logistic.clone())));
        r
    }

    pub fn register(&mut self, trainer: Box<dyn ClassifierTrainer>) {
        self.trainers.insert(trainer.kind(), trainer);
    }

    pub fn get(&self, kind: &str) -> Result<&dyn ClassifierTrainer> {
        self.trainers
            .get(kind)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownStrategy { kind: "classifier", name: kind.to_string() })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.trainers.keys().copied().collect()
    }
}

/// Fits the classifier family named in `config`.
pub fn fit_classifier(
    features: &[FeatureVector],
    labels: &[usize],
    k: usize,
    config: &ClassifierConfig,
    seed: u64,
) -> Result<Box<dyn ProbabilisticClassifier>> {
    let rows: Vec<Vec<f64>> = features.iter().map(|f| f.0.to_vec()).collect();
    ClassifierRegistry::builtin(config).get(&config.kind)?.fit(&rows, labels, k, seed)
}

/// Probability-weighted average of the cluster medians.
pub fn weighted_impute(proba: &[f64], model: &ClusterModel) -> Result<TargetPair> {
    if proba.len() != model.medians.len() {
        return Err(Error::KMismatch { proba: proba.len(), model: model.medians.len() });
    }
    let mut out = TargetPair::default();
    for (p, m) in proba.iter().zip(&model.medians) {
        out.fsi += p * m.fsi;
        out.gsi += p * m.gsi;
    }
    Ok(out)
}
