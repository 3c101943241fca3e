use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::Feature;

use super::benchmark::MaskMode;

/// A metric value; `None` stands for NaN, with the reason kept alongside.
pub type MetricValue = Option<f64>;

pub const R2_ROBUST_DEFINITION: &str = "R^2 recomputed after dropping pairs whose absolute residual exceeds the \
     nearest-rank 95th percentile: the ceil(0.95 n) smallest absolute residuals are kept, ties dropped from the \
     highest index; requires n >= 20";
pub const POOLING_ORDER: &str = "per repetition: mean over features, then mean over rates; then mean over repetitions";
pub const SCOPE: &str = "metrics are computed on masked (hidden) entries only";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub r2_robust_definition: String,
    pub pooling_order: String,
    pub scope: String,
    pub mask_mode: MaskMode,
    pub n_eligible: usize,
}

impl ReportMetadata {
    pub fn new(mask_mode: MaskMode, n_eligible: usize) -> Self {
        Self {
            r2_robust_definition: R2_ROBUST_DEFINITION.into(),
            pooling_order: POOLING_ORDER.into(),
            scope: SCOPE.into(),
            mask_mode,
            n_eligible,
        }
    }
}

/// Mean and sample standard deviation over the repetitions where a value was defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: MetricValue,
    pub std: MetricValue,
    pub count: usize,
    pub nan_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nan_reason: Option<String>,
}

pub(crate) fn summarize<'a>(values: impl Iterator<Item = (MetricValue, &'a Vec<String>)>) -> MetricSummary {
    let mut xs = Vec::new();
    let mut nan_count = 0;
    let mut nan_reason = None;
    for (v, reasons) in values {
        match v {
            Some(x) => xs.push(x),
            None => {
                nan_count += 1;
                if nan_reason.is_none() {
                    nan_reason = reasons.first().cloned();
                }
            }
        }
    }
    let (mean, std) = mean_std(&xs);
    MetricSummary { mean, std, count: xs.len(), nan_count, nan_reason }
}

pub fn mean_std(xs: &[f64]) -> (MetricValue, MetricValue) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        Some((xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt())
    } else {
        None
    };
    (Some(mean), std)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub rate: f64,
    pub feature: Feature,
    pub mae: MetricSummary,
    pub rmse: MetricSummary,
    pub r2: MetricSummary,
    pub r2_robust: MetricSummary,
    /// Repetitions on which the method failed outright.
    pub failures: usize,
}

/// Single number per method and metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledRow {
    pub method: String,
    pub mae: MetricValue,
    pub rmse: MetricValue,
    pub r2: MetricValue,
    pub r2_robust: MetricValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mae,
    Rmse,
    R2,
    R2Robust,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Mae, Metric::Rmse, Metric::R2, Metric::R2Robust];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mae => "mae",
            Metric::Rmse => "rmse",
            Metric::R2 => "r2",
            Metric::R2Robust => "r2_robust",
        }
    }
}

impl SampleRecord {
    pub fn value(&self, metric: Metric) -> MetricValue {
        match metric {
            Metric::Mae => self.mae,
            Metric::Rmse => self.rmse,
            Metric::R2 => self.r2,
            Metric::R2Robust => self.r2_robust,
        }
    }
}

impl ReportRow {
    pub fn summary(&self, metric: Metric) -> &MetricSummary {
        match metric {
            Metric::Mae => &self.mae,
            Metric::Rmse => &self.rmse,
            Metric::R2 => &self.r2,
            Metric::R2Robust => &self.r2_robust,
        }
    }
}

impl PooledRow {
    pub(crate) fn compute(report: &EvalReport, method: usize) -> Self {
        let pooled = |metric| {
            let per_rep: Vec<f64> = report.pooled_by_rep(method, metric).into_iter().flatten().collect();
            mean_std(&per_rep).0
        };
        Self {
            method: report.methods[method].clone(),
            mae: pooled(Metric::Mae),
            rmse: pooled(Metric::Rmse),
            r2: pooled(Metric::R2),
            r2_robust: pooled(Metric::R2Robust),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub rate_index: usize,
    pub rep: usize,
    pub seed: u64,
    /// Fingerprint of the masked table every method received.
    pub fingerprint: String,
    /// Hidden entries per feature (FSI, GSI).
    pub n_hidden: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub method: usize,
    pub rate_index: usize,
    pub rep: usize,
    pub feature: Feature,
    pub mae: MetricValue,
    pub rmse: MetricValue,
    pub r2: MetricValue,
    pub r2_robust: MetricValue,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub method: usize,
    pub rate_index: usize,
    pub rep: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    pub master_seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub methods: Vec<String>,
    pub rates: Vec<f64>,
    pub reps: usize,
    pub repetitions: Vec<RepetitionRecord>,
    pub rows: Vec<ReportRow>,
    pub pooled: Vec<PooledRow>,
    pub samples: Vec<SampleRecord>,
    pub failures: Vec<FailureRecord>,
}

impl EvalReport {
    pub fn method_index(&self, name: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == name)
    }

    pub fn row(&self, method: &str, rate: f64, feature: Feature) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.rate == rate && r.feature == feature)
    }

    /// Per repetition, the feature mean averaged over rates. `None` where
    /// nothing was defined for that repetition.
    pub fn pooled_by_rep(&self, method: usize, metric: Metric) -> Vec<MetricValue> {
        let nr = self.rates.len();
        // [rep][rate] -> feature values
        let mut cells = vec![vec![Vec::new(); nr]; self.reps];
        for s in self.samples.iter().filter(|s| s.method == method) {
            cells[s.rep][s.rate_index].push(s.value(metric));
        }
        cells
            .into_iter()
            .map(|rates| {
                let per_rate: Vec<f64> = rates
                    .into_iter()
                    .filter(|f| f.len() == Feature::BOTH.len() && f.iter().all(Option::is_some))
                    .map(|f| f.iter().flatten().sum::<f64>() / f.len() as f64)
                    .collect();
                mean_std(&per_rate).0
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| crate::error::Error::InvalidTable(e.to_string()))
    }

    /// One line per method × rate × feature × metric × statistic.
    pub fn write_flat_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "rate", "feature", "metric", "statistic", "value"]).map_err(csv_err)?;
        for row in &self.rows {
            for metric in Metric::ALL {
                let s = row.summary(metric);
                let stats = [
                    ("mean", fmt_value(s.mean)),
                    ("std", fmt_value(s.std)),
                    ("count", s.count.to_string()),
                    ("nan_count", s.nan_count.to_string()),
                ];
                for (stat, value) in stats {
                    w.write_record([
                        row.method.as_str(),
                        &row.rate.to_string(),
                        row.feature.name(),
                        metric.name(),
                        stat,
                        &value,
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Metric against missing rate, one line per method, feature and rate.
    pub fn write_curve_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["method".to_string(), "feature".into(), "rate".into()];
        for m in Metric::ALL {
            header.push(format!("{}_mean", m.name()));
            header.push(format!("{}_std", m.name()));
        }
        w.write_record(&header).map_err(csv_err)?;
        for method in &self.methods {
            for feature in Feature::BOTH {
                for &rate in &self.rates {
                    let Some(row) = self.row(method, rate, feature) else { continue };
                    let mut rec = vec![method.clone(), feature.name().into(), rate.to_string()];
                    for m in Metric::ALL {
                        rec.push(fmt_value(row.summary(m).mean));
                        rec.push(fmt_value(row.summary(m).std));
                    }
                    w.write_record(&rec).map_err(csv_err)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt_value(v: MetricValue) -> String {
    v.map_or_else(|| "NaN".to_string(), |x| x.to_string())
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Io(e.to_string())
}

/// Paired comparison of two methods over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub description: String,
    /// Mean of `baseline − candidate` (positive favours the candidate).
    pub mean_margin: f64,
    pub std_error: f64,
    pub n: usize,
    pub passed: bool,
}

/// Emitted whenever an expected ordering does not hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub failed: Vec<String>,
    pub mean_mae: Vec<(String, f64)>,
    pub hint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalCheck {
    pub checks: Vec<OrderingCheck>,
    pub worst_method: Option<String>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationReport>,
}

fn paired(report: &EvalReport, baseline: usize, candidate: usize) -> (f64, f64, usize) {
    let a = report.pooled_by_rep(baseline, Metric::Mae);
    let b = report.pooled_by_rep(candidate, Metric::Mae);
    let d: Vec<f64> = a.iter().zip(&b).filter_map(|(x, y)| Some((*x)? - (*y)?)).collect();
    let (mean, std) = mean_std(&d);
    let se = std.map_or(f64::INFINITY, |s| s / (d.len() as f64).sqrt());
    (mean.unwrap_or(f64::NAN), se, d.len())
}

/// Checks that each hybrid is no worse than its spatial baseline (within one
/// standard error of the paired MAE difference) and that `worst` has the
/// highest mean MAE. Pairs are `(baseline, hybrid)` method names.
pub fn directional_check(report: &EvalReport, pairs: &[(&str, &str)], worst: &str) -> DirectionalCheck {
    let mut checks = Vec::new();
    let mut failed = Vec::new();
    for &(base, cand) in pairs {
        let description = format!("MAE({cand}) <= MAE({base})");
        match (report.method_index(base), report.method_index(cand)) {
            (Some(b), Some(c)) => {
                let (mean_margin, std_error, n) = paired(report, b, c);
                let passed = n > 0 && mean_margin >= -std_error;
                if !passed {
                    failed.push(description.clone());
                }
                checks.push(OrderingCheck { description, mean_margin, std_error, n, passed });
            }
            _ => {
                failed.push(format!("{description}: method missing from report"));
                checks.push(OrderingCheck { description, mean_margin: f64::NAN, std_error: f64::NAN, n: 0, passed: false });
            }
        }
    }
    let mean_mae: Vec<(String, f64)> = report
        .pooled
        .iter()
        .map(|p| (p.method.clone(), p.mae.unwrap_or(f64::NAN)))
        .collect();
    let worst_method = mean_mae
        .iter()
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(m, _)| m.clone());
    if worst_method.as_deref() != Some(worst) {
        failed.push(format!("{worst} has the highest MAE (observed: {worst_method:?})"));
    }
    let passed = failed.is_empty();
    let calibration = (!passed).then(|| CalibrationReport {
        failed,
        mean_mae,
        hint: "adjust synth regime separation, spatial_scale or noise levels and rerun".into(),
    });
    DirectionalCheck { checks, worst_method, passed, calibration }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(method: usize, rate_index: usize, rep: usize, feature: Feature, mae: f64) -> SampleRecord {
        SampleRecord {
            method,
            rate_index,
            rep,
            feature,
            mae: Some(mae),
            rmse: Some(mae),
            r2: None,
            r2_robust: None,
            reasons: vec!["r2: zero variance".into()],
        }
    }

    fn report(samples: Vec<SampleRecord>, methods: &[&str], reps: usize, rates: usize) -> EvalReport {
        let mut r = EvalReport {
            metadata: ReportMetadata::new(MaskMode::Joint, 10),
            master_seed: 0,
            config_hash: String::new(),
            config: serde_json::Value::Null,
            methods: methods.iter().map(|s| s.to_string()).collect(),
            rates: (0..rates).map(|i| 0.1 * (i + 1) as f64).collect(),
            reps,
            repetitions: vec![],
            rows: vec![],
            pooled: vec![],
            samples,
            failures: vec![],
        };
        r.pooled = (0..methods.len()).map(|m| PooledRow::compute(&r, m)).collect();
        r
    }

    #[test]
    fn summary_counts_nans() {
        let reasons = vec!["zero variance".to_string()];
        let none: Vec<String> = vec![];
        let s = summarize([(Some(1.0), &none), (None, &reasons), (Some(3.0), &none)].into_iter());
        assert_eq!(s.mean, Some(2.0));
        assert_eq!(s.std, Some(2f64.sqrt()));
        assert_eq!(s.count, 2);
        assert_eq!(s.nan_count, 1);
        assert_eq!(s.nan_reason.as_deref(), Some("zero variance"));
    }

    #[test]
    fn pooling_averages_features_then_rates_then_reps() {
        let s = vec![
            sample(0, 0, 0, Feature::Fsi, 1.0),
            sample(0, 0, 0, Feature::Gsi, 3.0),
            sample(0, 1, 0, Feature::Fsi, 4.0),
            sample(0, 1, 0, Feature::Gsi, 4.0),
            sample(0, 0, 1, Feature::Fsi, 0.0),
            sample(0, 0, 1, Feature::Gsi, 0.0),
        ];
        let r = report(s, &["a"], 2, 2);
        // rep 0: (2 + 4) / 2 = 3; rep 1: only rate 0 defined -> 0.
        assert_eq!(r.pooled_by_rep(0, Metric::Mae), vec![Some(3.0), Some(0.0)]);
        assert_eq!(r.pooled[0].mae, Some(1.5));
        assert_eq!(r.pooled[0].r2, None);
    }

    #[test]
    fn directional_check_flags_wrong_order() {
        let mut s = Vec::new();
        for rep in 0..5 {
            let j = rep as f64 * 0.01;
            for f in Feature::BOTH {
                s.push(sample(0, 0, rep, f, 0.20 + j));
                s.push(sample(1, 0, rep, f, 0.18 + j));
                s.push(sample(2, 0, rep, f, 0.30 + j));
            }
        }
        let r = report(s, &["idw", "sm+idw", "smvnmf"], 5, 1);
        let ok = directional_check(&r, &[("idw", "sm+idw")], "smvnmf");
        assert!(ok.passed, "{ok:?}");
        assert!(ok.calibration.is_none());
        let bad = directional_check(&r, &[("sm+idw", "idw")], "idw");
        assert!(!bad.passed);
        let cal = bad.calibration.unwrap();
        assert_eq!(cal.failed.len(), 2);
    }

    #[test]
    fn csv_outputs_have_expected_shape() {
        let row = ReportRow {
            method: "a".into(),
            rate: 0.1,
            feature: Feature::Fsi,
            mae: summarize([(Some(1.0), &vec![])].into_iter()),
            rmse: summarize([(Some(1.0), &vec![])].into_iter()),
            r2: summarize([(None, &vec!["zero variance".to_string()])].into_iter()),
            r2_robust: summarize([(None, &vec![])].into_iter()),
            failures: 0,
        };
        let mut r = report(vec![], &["a"], 1, 1);
        r.rows = vec![row];
        let mut flat = Vec::new();
        r.write_flat_csv(&mut flat).unwrap();
        let flat = String::from_utf8(flat).unwrap();
        assert_eq!(flat.lines().count(), 1 + 4 * 4);
        assert!(flat.contains("a,0.1,fsi,r2,mean,NaN"));
        let mut curve = Vec::new();
        r.write_curve_csv(&mut curve).unwrap();
        assert_eq!(String::from_utf8(curve).unwrap().lines().count(), 2);
    }
}
