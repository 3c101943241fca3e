//! L2-regularized multinomial logistic regression, full-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{check_labels, softmax_in_place, ProbabilisticClassifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticParams {
    pub l2: f64,
    pub max_steps: usize,
    pub grad_tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self { l2: 1e-3, max_steps: 5000, grad_tol: 1e-6 }
    }
}

/// Weights act on internally standardized features; column 0 of each class
/// row is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// `n_classes` rows of `n_features + 1` coefficients.
    pub weights: Vec<Vec<f64>>,
    pub steps: usize,
    pub final_grad_norm: f64,
}

impl LogisticModel {
    /// Untrained model with every coefficient zero.
    pub fn zeros(n_classes: usize, n_features: usize) -> Self {
        Self {
            n_classes,
            n_features,
            means: vec![0.0; n_features],
            scales: vec![1.0; n_features],
            weights: vec![vec![0.0; n_features + 1]; n_classes],
            steps: 0,
            final_grad_norm: f64::NAN,
        }
    }

    fn design_row(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        for j in 0..self.n_features {
            out[j + 1] = (x[j] - self.means[j]) / self.scales[j];
        }
    }

    fn logits(&self, z: &[f64], out: &mut [f64]) {
        for (c, w) in self.weights.iter().enumerate() {
            out[c] = w.iter().zip(z).map(|(a, b)| a * b).sum();
        }
    }

    pub fn fit(
        features: &[Vec<f64>],
        labels: &[usize],
        n_classes: usize,
        params: &LogisticParams,
    ) -> Result<Self> {
        if !(params.l2 >= 0.0) || params.max_steps == 0 || !(params.grad_tol > 0.0) {
            return Err(Error::InvalidConfig(format!("invalid logistic parameters {params:?}")));
        }
        check_labels(features, labels, n_classes)?;
        let n = features.len();
        let d = features[0].len();
        let k = n_classes;
        let mut model = Self::zeros(k, d);
        for j in 0..d {
            let mean = features.iter().map(|x| x[j]).sum::<f64>() / n as f64;
            let var = features.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n as f64;
            model.means[j] = mean;
            model.scales[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        let design: Vec<Vec<f64>> = features
            .iter()
            .map(|x| {
                let mut z = vec![0.0; d + 1];
                model.design_row(x, &mut z);
                z
            })
            .collect();
        // Hessian bound for averaged softmax cross-entropy on standardized columns.
        let step = 1.0 / (0.5 * (d as f64 + 1.0) + params.l2);
        let mut grad = vec![vec![0.0; d + 1]; k];
        let mut p = vec![0.0; k];
        let mut norm = f64::INFINITY;
        let mut steps = 0;
        while steps < params.max_steps {
            grad.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            for (z, &y) in design.iter().zip(labels) {
                model.logits(z, &mut p);
                softmax_in_place(&mut p);
                for c in 0..k {
                    let r = p[c] - if c == y { 1.0 } else { 0.0 };
                    for (g, &zj) in grad[c].iter_mut().zip(z) {
                        *g += r * zj;
                    }
                }
            }
            let mut sq = 0.0;
            for c in 0..k {
                for j in 0..=d {
                    let mut g = grad[c][j] / n as f64;
                    if j > 0 {
                        g += params.l2 * model.weights[c][j];
                    }
                    grad[c][j] = g;
                    sq += g * g;
                }
            }
            norm = sq.sqrt();
            if norm < params.grad_tol {
                break;
            }
            for c in 0..k {
                for j in 0..=d {
                    model.weights[c][j] -= step * grad[c][j];
                }
            }
            steps += 1;
        }
        model.steps = steps;
        model.final_grad_norm = norm;
        Ok(model)
    }
}

impl ProbabilisticClassifier for LogisticModel {
    fn kind(&self) -> &'static str {
        super::LOGISTIC
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: features.len() });
        }
        let mut z = vec![0.0; self.n_features + 1];
        self.design_row(features, &mut z);
        let mut p = vec![0.0; self.n_classes];
        self.logits(&z, &mut p);
        softmax_in_place(&mut p);
        Ok(p)
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("logistic model serializes")
    }
}
