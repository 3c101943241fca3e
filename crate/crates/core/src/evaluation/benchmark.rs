use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imputer::{ImputeContext, Imputer, STANDARD_METHODS};
use crate::model::{BlockTable, Feature};
use crate::rng::derive_seed;

use super::mask::{generate_mask, MAX_RATE};
use super::metrics::{mae, r2, r2_robust, rmse};
use super::report::{
    summarize, EvalReport, FailureRecord, MetricValue, PooledRow, ReportMetadata, ReportRow, RepetitionRecord,
    SampleRecord,
};

const METHOD_STREAM: u64 = 0x6d65_7468;
const FEATURE_STREAM: u64 = 0x6665_6174;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// FSI and GSI hidden together on the same blocks.
    #[default]
    Joint,
    /// One mask per feature, drawn from separate streams.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub rates: Vec<f64>,
    pub reps: usize,
    pub methods: Vec<String>,
    pub mask_mode: MaskMode,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            rates: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            reps: 100,
            methods: STANDARD_METHODS.iter().map(|s| s.to_string()).collect(),
            mask_mode: MaskMode::Joint,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() {
            return Err(Error::InvalidConfig("evaluate.rates must not be empty".into()));
        }
        if let Some(r) = self.rates.iter().find(|r| !(0.0..=MAX_RATE).contains(*r)) {
            return Err(Error::InvalidConfig(format!("evaluate.rates entry {r} outside [0, {MAX_RATE}]")));
        }
        if self.reps == 0 {
            return Err(Error::InvalidConfig("evaluate.reps must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("evaluate.methods must not be empty".into()));
        }
        Ok(())
    }
}

/// Stream used for one rate. Keyed on the rate value so that reordering or
/// extending the rate list leaves existing masks untouched.
pub fn rate_stream(rate: f64) -> u64 {
    (rate * 1e9).round() as u64
}

/// Seed of repetition `rep` at `rate`; also the mask seed.
pub fn repetition_seed(master_seed: u64, rate: f64, rep: usize) -> u64 {
    derive_seed(master_seed, rate_stream(rate), rep as u64)
}

struct Outcome {
    record: RepetitionRecord,
    samples: Vec<SampleRecord>,
    failures: Vec<FailureRecord>,
}

fn metric(res: Result<f64>, reasons: &mut Vec<String>, name: &str) -> MetricValue {
    match res {
        Ok(v) if v.is_finite() => Some(v),
        Ok(v) => {
            reasons.push(format!("{name}: non-finite value {v}"));
            None
        }
        Err(e) => {
            reasons.push(format!("{name}: {e}"));
            None
        }
    }
}

fn run_repetition(
    table: &BlockTable,
    eligible: &[usize],
    methods: &[Arc<dyn Imputer>],
    config: &BenchmarkConfig,
    master_seed: u64,
    rate_index: usize,
    rep: usize,
) -> Result<Outcome> {
    let rate = config.rates[rate_index];
    let seed = repetition_seed(master_seed, rate, rep);
    let mut hidden_by_feature: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    match config.mask_mode {
        MaskMode::Joint => {
            let mask = generate_mask(eligible.len(), rate, seed)?;
            let blocks: Vec<usize> = mask.indices.iter().map(|&i| eligible[i]).collect();
            hidden_by_feature = [blocks.clone(), blocks];
        }
        MaskMode::Independent => {
            for (f, slot) in hidden_by_feature.iter_mut().enumerate() {
                let mask = generate_mask(eligible.len(), rate, derive_seed(seed, FEATURE_STREAM, f as u64))?;
                *slot = mask.indices.iter().map(|&i| eligible[i]).collect();
            }
        }
    }
    let hidden: Vec<(usize, Feature)> = Feature::BOTH
        .iter()
        .enumerate()
        .flat_map(|(f, &feat)| hidden_by_feature[f].iter().map(move |&i| (i, feat)))
        .collect();
    let masked = table.with_hidden(&hidden);
    let fingerprint = masked.fingerprint();
    let ctx = ImputeContext::new(&masked, derive_seed(seed, METHOD_STREAM, 0));

    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (m, method) in methods.iter().enumerate() {
        let result = ctx.run(method.as_ref());
        // Every method must have been handed the same masked table.
        let seen = ctx.table().fingerprint();
        assert_eq!(seen, fingerprint, "masked table changed while running {}", method.name());
        let imputed = match result {
            Ok(v) => v,
            Err(e) => {
                failures.push(FailureRecord { method: m, rate_index, rep, error: e.to_string() });
                continue;
            }
        };
        let mut per_feature = Vec::with_capacity(2);
        let mut missing = None;
        for (f, &feat) in Feature::BOTH.iter().enumerate() {
            let mut y = Vec::with_capacity(hidden_by_feature[f].len());
            let mut yhat = Vec::with_capacity(hidden_by_feature[f].len());
            for &i in &hidden_by_feature[f] {
                let rec = &table.records()[i];
                match imputed.get(&rec.id) {
                    Some(p) => {
                        y.push(rec.target(feat).expect("eligible blocks are complete"));
                        yhat.push(p.get(feat));
                    }
                    None => {
                        missing = Some(rec.id.clone());
                        break;
                    }
                }
            }
            if missing.is_some() {
                break;
            }
            let mut reasons = Vec::new();
            per_feature.push(SampleRecord {
                method: m,
                rate_index,
                rep,
                feature: feat,
                mae: metric(mae(&y, &yhat), &mut reasons, "mae"),
                rmse: metric(rmse(&y, &yhat), &mut reasons, "rmse"),
                r2: metric(r2(&y, &yhat), &mut reasons, "r2"),
                r2_robust: metric(r2_robust(&y, &yhat), &mut reasons, "r2_robust"),
                reasons,
            });
        }
        match missing {
            Some(id) => failures.push(FailureRecord {
                method: m,
                rate_index,
                rep,
                error: format!("no prediction for hidden block {id}"),
            }),
            None => samples.extend(per_feature),
        }
    }
    Ok(Outcome {
        record: RepetitionRecord {
            rate_index,
            rep,
            seed,
            fingerprint,
            n_hidden: [hidden_by_feature[0].len(), hidden_by_feature[1].len()],
        },
        samples,
        failures,
    })
}

/// Runs every method on common masks for each rate and repetition.
///
/// `snapshot` is the configuration recorded in the report; its hash goes
/// into the metadata.
pub fn run_benchmark(
    table: &BlockTable,
    methods: &[Arc<dyn Imputer>],
    config: &BenchmarkConfig,
    master_seed: u64,
    snapshot: serde_json::Value,
) -> Result<EvalReport> {
    config.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidConfig("no methods to evaluate".into()));
    }
    let eligible = table.complete_indices();
    let tasks: Vec<(usize, usize)> =
        (0..config.rates.len()).flat_map(|r| (0..config.reps).map(move |k| (r, k))).collect();
    let outcomes: Vec<Outcome> = tasks
        .par_iter()
        .map(|&(r, k)| run_repetition(table, &eligible, methods, config, master_seed, r, k))
        .collect::<Result<_>>()?;

    let mut repetitions = Vec::with_capacity(outcomes.len());
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        repetitions.push(o.record);
        samples.extend(o.samples);
        failures.extend(o.failures);
    }

    let names: Vec<String> = methods.iter().map(|m| m.name().to_string()).collect();
    let mut rows = Vec::new();
    for m in 0..names.len() {
        for (r, &rate) in config.rates.iter().enumerate() {
            for &feat in &Feature::BOTH {
                let cell: Vec<&SampleRecord> =
                    samples.iter().filter(|s| s.method == m && s.rate_index == r && s.feature == feat).collect();
                let n_fail = failures.iter().filter(|f| f.method == m && f.rate_index == r).count();
                rows.push(ReportRow {
                    method: names[m].clone(),
                    rate,
                    feature: feat,
                    mae: summarize(cell.iter().map(|s| (s.mae, &s.reasons))),
                    rmse: summarize(cell.iter().map(|s| (s.rmse, &s.reasons))),
                    r2: summarize(cell.iter().map(|s| (s.r2, &s.reasons))),
                    r2_robust: summarize(cell.iter().map(|s| (s.r2_robust, &s.reasons))),
                    failures: n_fail,
                });
            }
        }
    }

    let mut report = EvalReport {
        metadata: ReportMetadata::new(config.mask_mode, eligible.len()),
        master_seed,
        config_hash: crate::config::config_hash(&snapshot),
        config: snapshot,
        methods: names,
        rates: config.rates.clone(),
        reps: config.reps,
        repetitions,
        rows,
        pooled: Vec::new(),
        samples,
        failures,
    };
    report.pooled = (0..report.methods.len()).map(|m| PooledRow::compute(&report, m)).collect();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imputer::ImputerRegistry;
    use crate::model::{BlockRecord, Imputation, TargetPair};

    struct Oracle(BlockTable);

    impl Imputer for Oracle {
        fn name(&self) -> &str {
            "oracle"
        }

        fn impute(&self, ctx: &ImputeContext<'_>) -> Result<Imputation> {
            Ok(ctx
                .table()
                .iter()
                .filter(|r| !r.is_complete())
                .map(|r| {
                    let t = self.0.get(&r.id).unwrap();
                    (r.id.clone(), TargetPair::new(t.fsi.unwrap(), t.gsi.unwrap()))
                })
                .collect())
        }
    }

    struct Failing;

    impl Imputer for Failing {
        fn name(&self) -> &str {
            "failing"
        }

        fn impute(&self, _: &ImputeContext<'_>) -> Result<Imputation> {
            Err(Error::EmptyIndex)
        }
    }

    fn grid(n: usize) -> BlockTable {
        let recs = (0..n * n)
            .map(|i| {
                let (x, y) = ((i % n) as f64, (i / n) as f64);
                let mut shares = [0.0; 7];
                shares[i % 7] = 1.0;
                BlockRecord {
                    id: format!("b{i:04}"),
                    centroid: (x * 100.0, y * 100.0),
                    shares,
                    site_area: 1e4 + i as f64,
                    fsi: Some(0.2 + 0.01 * x + 0.3 * ((i % 3) as f64)),
                    gsi: Some(0.05 + 0.005 * y + 0.1 * ((i % 3) as f64)),
                }
            })
            .collect();
        BlockTable::new(recs)
    }

    fn small_config(methods: &[&str]) -> BenchmarkConfig {
        BenchmarkConfig {
            rates: vec![0.1, 0.3],
            reps: 3,
            methods: methods.iter().map(|s| s.to_string()).collect(),
            mask_mode: MaskMode::Joint,
        }
    }

    #[test]
    fn oracle_scores_perfectly() {
        let t = grid(10);
        let methods: Vec<Arc<dyn Imputer>> = vec![Arc::new(Oracle(t.clone()))];
        let rep = run_benchmark(&t, &methods, &small_config(&["oracle"]), 7, serde_json::json!({})).unwrap();
        assert_eq!(rep.rows.len(), 4);
        for row in &rep.rows {
            assert_eq!(row.mae.mean, Some(0.0));
            assert_eq!(row.rmse.mean, Some(0.0));
            assert_eq!(row.r2.mean, Some(1.0));
            assert_eq!(row.mae.count, 3);
        }
        assert_eq!(rep.repetitions.len(), 6);
        assert_eq!(rep.repetitions[0].n_hidden, [10, 10]);
    }

    #[test]
    fn identical_methods_give_identical_rows() {
        let t = grid(10);
        let reg = ImputerRegistry::default();
        let cfg = crate::config::RunConfig::default();
        let methods = vec![reg.build("idw", &cfg).unwrap(), reg.build("idw", &cfg).unwrap()];
        let rep = run_benchmark(&t, &methods, &small_config(&["idw", "idw"]), 7, serde_json::json!({})).unwrap();
        let half = rep.rows.len() / 2;
        for i in 0..half {
            assert_eq!(rep.rows[i].mae, rep.rows[i + half].mae);
            assert_eq!(rep.rows[i].r2_robust, rep.rows[i + half].r2_robust);
        }
    }

    #[test]
    fn failures_are_counted_and_excluded() {
        let t = grid(10);
        let methods: Vec<Arc<dyn Imputer>> = vec![Arc::new(Failing), Arc::new(Oracle(t.clone()))];
        let rep = run_benchmark(&t, &methods, &small_config(&["failing", "oracle"]), 1, serde_json::json!({})).unwrap();
        assert_eq!(rep.failures.len(), 6);
        let row = &rep.rows[0];
        assert_eq!(row.failures, 3);
        assert_eq!(row.mae.count, 0);
        assert_eq!(row.mae.mean, None);
        assert_eq!(rep.rows[4].mae.mean, Some(0.0));
    }

    #[test]
    fn masks_do_not_depend_on_method_list() {
        let t = grid(10);
        let one: Vec<Arc<dyn Imputer>> = vec![Arc::new(Oracle(t.clone()))];
        let two: Vec<Arc<dyn Imputer>> = vec![Arc::new(Failing), Arc::new(Oracle(t.clone()))];
        let a = run_benchmark(&t, &one, &small_config(&["oracle"]), 3, serde_json::json!({})).unwrap();
        let b = run_benchmark(&t, &two, &small_config(&["failing", "oracle"]), 3, serde_json::json!({})).unwrap();
        assert_eq!(a.repetitions, b.repetitions);
    }

    #[test]
    fn independent_masks_differ_per_feature() {
        let t = grid(10);
        let methods: Vec<Arc<dyn Imputer>> = vec![Arc::new(Oracle(t.clone()))];
        let mut cfg = small_config(&["oracle"]);
        cfg.mask_mode = MaskMode::Independent;
        let rep = run_benchmark(&t, &methods, &cfg, 3, serde_json::json!({})).unwrap();
        assert_eq!(rep.repetitions[0].n_hidden, [10, 10]);
        assert!(rep.rows.iter().all(|r| r.mae.mean == Some(0.0)));
    }

    #[test]
    fn only_complete_blocks_are_masked() {
        let mut t = grid(10);
        let mut recs = t.records().to_vec();
        for r in recs.iter_mut().take(20) {
            r.fsi = None;
        }
        t = BlockTable::new(recs);
        let methods: Vec<Arc<dyn Imputer>> = vec![Arc::new(Oracle(grid(10)))];
        let rep = run_benchmark(&t, &methods, &small_config(&["oracle"]), 3, serde_json::json!({})).unwrap();
        assert_eq!(rep.metadata.n_eligible, 80);
        assert_eq!(rep.repetitions[0].n_hidden, [8, 8]);
    }
}
