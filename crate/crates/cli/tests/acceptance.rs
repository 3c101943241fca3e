//! Acceptance checks. Prints one `criterion N: PASS|FAIL|SKIPPED` line per
//! criterion and exits non-zero if any criterion fails.
//!
//! Environment:
//! - `SM_IMPUTE_ACCEPTANCE_FULL=1` runs criterion 6 at full scale (two timed
//!   `evaluate` runs over 7 rates × 100 repetitions on 5000 blocks).
//! - `SM_IMPUTE_SPB_DATA=<table>` enables criterion 8; `SM_IMPUTE_SPB_REPS`
//!   overrides its repetition count (default 100).

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use smimpute::classifier::{build_features, weighted_impute, ClassifierConfig, ClassifierRegistry, LOGISTIC};
use smimpute::evaluation::{
    directional_check, generate_mask, metrics, repetition_seed, run_benchmark, BenchmarkConfig, EvalReport,
};
use smimpute::io::{load_table, TableFormat};
use smimpute::morphology::{fit_cluster_model, kmeans_best_of, kmeans_fit, ClusterModel, Point, Standardizer};
use smimpute::rng::rng_from_seed;
use smimpute::sm::SmModel;
use smimpute::smvnmf::{build_spatial_laplacian, masked_nmf, NmfConfig};
use smimpute::stats::{anova_f, morans_i, morans_i_permutation_p, pearson_r, stats_report, SpatialWeights, StatsConfig};
use smimpute::synth::{generate_city, SynthConfig};
use smimpute::{BlockTable, Feature, ImputeContext, Imputer, ImputerRegistry, RunConfig, TargetPair, STANDARD_METHODS};

const METRIC_TOL: f64 = 1e-10;
const METRIC_BUDGET: Duration = Duration::from_secs(1);
const INERTIA_REL_TOL: f64 = 1e-9;
const RECOVERY_MIN: f64 = 0.99;
const NMF_REL_TOL: f64 = 1e-9;
const NMF_RESIDUAL: f64 = 1e-6;
const PROBA_SUM_TOL: f64 = 1e-9;
const CONVEX_SLACK: f64 = 1e-12;
const CHECKERBOARD_TOL: f64 = 0.05;
const ANOVA_TOL: f64 = 1e-9;
const P_FLOOR: f64 = 0.001;
const PROTOCOL_BUDGET: Duration = Duration::from_secs(600);
const REFERENCE_TOL: f64 = 0.02;
const MEAN_REL_TOL: f64 = 0.20;
const PEARSON_RANGE: (f64, f64) = (0.6, 0.9);
const MORAN_MIN: f64 = 0.3;

const TARGET_FSI_MEAN: f64 = 0.377;
const TARGET_GSI_MEAN: f64 = 0.110;
const REFERENCE_MAE: [(&str, f64); 7] = [
    ("idw", 0.1713),
    ("sknn", 0.1731),
    ("sm", 0.1837),
    ("sm+idw", 0.1629),
    ("sm+sknn", 0.1647),
    ("sm+smvnmf", 0.2203),
    ("smvnmf", 0.2718),
];
const SEED: u64 = 42;

enum Verdict {
    Pass(String),
    Fail(String),
    Skipped(String),
}

use Verdict::{Fail, Pass, Skipped};

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

fn main() {
    // Invoked by `cargo test -- --list` and similar; nothing to enumerate.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [fn() -> Verdict; 9] = [
        metric_oracles,
        kmeans_contract,
        nmf_contract,
        classifier_contract,
        spatial_stats,
        protocol_shape,
        directional_ordering,
        reference_values,
        synthetic_calibration,
    ];
    let mut failed = 0;
    for (i, check) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Fail(format!("panicked: {msg}"))
        });
        let (status, detail) = match v {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Skipped(d) => ("SKIPPED", d),
        };
        println!("criterion {}: {status} ({detail}) [{:.1}s]", i + 1, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        c += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + c
}

/// MAE, RMSE and R² with compensated sums and the uncentered total sum of squares.
fn oracle_metrics(y: &[f64], yhat: &[f64]) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let pairs = || y.iter().zip(yhat);
    let abs = compensated_sum(pairs().map(|(a, b)| (a - b).abs()));
    let sq = compensated_sum(pairs().map(|(a, b)| (a - b) * (a - b)));
    let total = compensated_sum(y.iter().copied());
    let tot = compensated_sum(y.iter().map(|v| v * v)) - total * total / n;
    (abs / n, (sq / n).sqrt(), 1.0 - sq / tot)
}

fn metric_oracles() -> Verdict {
    let start = Instant::now();
    let mut rng = rng_from_seed(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..60);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let yhat: Vec<f64> = y.iter().map(|v| v + rng.gen_range(-2.0..2.0)).collect();
        let (mae, rmse, r2) = oracle_metrics(&y, &yhat);
        worst = worst
            .max((metrics::mae(&y, &yhat).unwrap() - mae).abs())
            .max((metrics::rmse(&y, &yhat).unwrap() - rmse).abs())
            .max((metrics::r2(&y, &yhat).unwrap() - r2).abs());
    }
    let mut ordered = true;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..40);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let yhat: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        ordered &= metrics::rmse(&y, &yhat).unwrap() >= metrics::mae(&y, &yhat).unwrap();
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= METRIC_TOL && ordered && elapsed < METRIC_BUDGET,
        format!("max oracle deviation {worst:.2e}, rmse >= mae: {ordered}, {:.3}s", elapsed.as_secs_f64()),
    )
}

/// Fraction of labels matching under the best cluster relabeling.
fn label_agreement(truth: &[usize], found: &[usize], k: usize) -> f64 {
    let mut best = 0;
    let mut perm: Vec<usize> = (0..k).collect();
    permute(&mut perm, 0, &mut |p| {
        let hits = truth.iter().zip(found).filter(|(t, f)| p[**f] == **t).count();
        best = best.max(hits);
    });
    best as f64 / truth.len() as f64
}

fn permute(p: &mut Vec<usize>, i: usize, visit: &mut dyn FnMut(&[usize])) {
    if i == p.len() {
        visit(p);
        return;
    }
    for j in i..p.len() {
        p.swap(i, j);
        permute(p, i + 1, visit);
        p.swap(i, j);
    }
}

fn kmeans_contract() -> Verdict {
    let mut rng = rng_from_seed(2);
    let mut violations = 0;
    for inst in 0..100u64 {
        let n = rng.gen_range(30..400);
        let k = rng.gen_range(1..9);
        let pts: Vec<Point> = (0..n).map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).collect();
        let fit = kmeans_fit(&pts, k, inst, 300).unwrap();
        violations += fit.inertia_trace.windows(2).filter(|w| w[1] > w[0] * (1.0 + INERTIA_REL_TOL)).count();
    }

    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let centers = [[0.0, 0.0], [10.0, 0.0], [5.0, 9.0]];
    let (mut pts, mut truth) = (Vec::new(), Vec::new());
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..300 {
            pts.push([center[0] + rng.sample(normal), center[1] + rng.sample(normal)]);
            truth.push(c);
        }
    }
    let fit = kmeans_best_of(&pts, 3, 7, 300, 10).unwrap();
    let agreement = label_agreement(&truth, &fit.labels, 3);
    let deterministic = kmeans_best_of(&pts, 3, 7, 300, 10).unwrap() == fit
        && kmeans_fit(&pts, 4, 11, 300).unwrap() == kmeans_fit(&pts, 4, 11, 300).unwrap();
    verdict(
        violations == 0 && agreement >= RECOVERY_MIN && deterministic,
        format!("trace violations {violations}/100 instances, recovery {agreement:.4}, deterministic: {deterministic}"),
    )
}

fn nmf_contract() -> Verdict {
    let mut rng = rng_from_seed(3);
    let (mut violations, mut full_runs) = (0, 0);
    for inst in 0..50u64 {
        let (n, d) = (rng.gen_range(15..50), rng.gen_range(5..12));
        let rank = rng.gen_range(2..5);
        let x: Vec<f64> = (0..n * d).map(|_| rng.gen_range(0.0..3.0)).collect();
        let mask: Vec<bool> = (0..n * d).map(|_| rng.gen::<f64>() > 0.25).collect();
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen(), rng.gen()]).collect();
        let lap = build_spatial_laplacian(&pts, 4);
        let lambda = if inst % 2 == 0 { 0.0 } else { rng.gen_range(0.01..1.0) };
        let cfg = NmfConfig { rank, lambda, max_iter: 500, tol: 0.0, ..Default::default() };
        let st = masked_nmf(&x, &mask, n, d, &cfg, Some(&lap), inst).unwrap();
        full_runs += usize::from(st.objective_trace.len() == 501);
        violations += st.objective_trace.windows(2).filter(|w| w[1] > w[0] * (1.0 + NMF_REL_TOL)).count();
    }

    let (n, d) = (40, 9);
    let u: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
    let v: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..2.0)).collect();
    let x: Vec<f64> = (0..n * d).map(|i| u[i / d] * v[i % d]).collect();
    let cfg = NmfConfig { rank: 1, lambda: 0.0, max_iter: 500, tol: 0.0, ..Default::default() };
    let st = masked_nmf(&x, &vec![true; n * d], n, d, &cfg, None, 5).unwrap();
    let residual = (0..n * d).map(|i| (x[i] - st.reconstruct(i / d, i % d)).powi(2)).sum::<f64>().sqrt();
    verdict(
        violations == 0 && residual < NMF_RESIDUAL,
        format!("trace violations {violations} over 50 instances ({full_runs} ran all 500 iterations), rank-1 residual {residual:.2e}"),
    )
}

fn hide_random(table: &BlockTable, rate: f64, seed: u64) -> (BlockTable, Vec<usize>) {
    let eligible = table.complete_indices();
    let mask = generate_mask(eligible.len(), rate, seed).unwrap();
    let blocks: Vec<usize> = mask.indices.iter().map(|&i| eligible[i]).collect();
    let hidden: Vec<(usize, Feature)> = blocks.iter().flat_map(|&i| [(i, Feature::Fsi), (i, Feature::Gsi)]).collect();
    (table.with_hidden(&hidden), blocks)
}

fn classifier_contract() -> Verdict {
    let config = RunConfig::default();
    let (city, _) = generate_city(&SynthConfig { n_blocks: 800, seed: 4, ..Default::default() }).unwrap();
    let (masked, hidden) = hide_random(&city, 0.3, 4);
    let mut rng = rng_from_seed(4);

    // Distribution sums for both classifier families on real and extreme inputs.
    let fit = fit_cluster_model(&masked, &config.clustering, 4).unwrap();
    let rows: Vec<Vec<f64>> = fit.rows.iter().map(|&i| build_features(&masked.records()[i]).0.to_vec()).collect();
    let registry = ClassifierRegistry::builtin(&ClassifierConfig::default());
    let mut worst_sum: f64 = 0.0;
    let mut negative = false;
    for kind in registry.names() {
        let model = registry.get(kind).unwrap().fit(&rows, &fit.labels, fit.model.k, 4).unwrap();
        let mut inputs: Vec<Vec<f64>> = masked.iter().map(|r| build_features(r).0.to_vec()).collect();
        for _ in 0..2000 {
            let scale = [1e-12, 1.0, 1e6, 1e12][rng.gen_range(0..4)];
            inputs.push((0..rows[0].len()).map(|_| rng.gen_range(-1.0..1.0) * scale).collect());
        }
        inputs.push(vec![0.0; rows[0].len()]);
        for x in &inputs {
            let p = model.predict_proba(x).unwrap();
            negative |= p.iter().any(|&v| !(v >= 0.0));
            worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
        }
        if kind == LOGISTIC {
            assert_eq!(model.n_classes(), fit.model.k);
        }
    }

    let mut outside = 0;
    for _ in 0..10_000 {
        let k = rng.gen_range(1..12);
        let medians: Vec<TargetPair> =
            (0..k).map(|_| TargetPair::new(rng.gen_range(0.0..5.0), rng.gen_range(0.0..1.0))).collect();
        let model = ClusterModel {
            standardizer: Standardizer { mean_fsi: 0.0, mean_gsi: 0.0, std_fsi: 1.0, std_gsi: 1.0 },
            centroids: vec![[0.0, 0.0]; k],
            medians: medians.clone(),
            k,
            inertia: 0.0,
            sizes: vec![1; k],
            seed: 0,
        };
        let mut p: Vec<f64> = if rng.gen_bool(0.1) {
            let hot = rng.gen_range(0..k);
            (0..k).map(|c| if c == hot { 1.0 } else { 0.0 }).collect()
        } else {
            (0..k).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect()
        };
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        let out = weighted_impute(&p, &model).unwrap();
        for f in Feature::BOTH {
            let lo = medians.iter().map(|m| m.get(f)).fold(f64::INFINITY, f64::min);
            let hi = medians.iter().map(|m| m.get(f)).fold(f64::NEG_INFINITY, f64::max);
            if out.get(f) < lo - CONVEX_SLACK || out.get(f) > hi + CONVEX_SLACK {
                outside += 1;
            }
        }
    }

    // Overwrite hidden targets with garbage before masking; every method must
    // produce the same imputations.
    let mut garbage = city.records().to_vec();
    for &i in &hidden {
        garbage[i].fsi = Some(1e6 + i as f64);
        garbage[i].gsi = Some(-3.0);
    }
    let hidden_pairs: Vec<(usize, Feature)> =
        hidden.iter().flat_map(|&i| [(i, Feature::Fsi), (i, Feature::Gsi)]).collect();
    let garbage = BlockTable::new(garbage).with_hidden(&hidden_pairs);
    let methods = ImputerRegistry::default();
    let mut differing = Vec::new();
    for name in STANDARD_METHODS {
        let m = methods.build(name, &config).unwrap();
        let a = ImputeContext::new(&masked, 9).run(m.as_ref()).unwrap();
        let b = ImputeContext::new(&garbage, 9).run(m.as_ref()).unwrap();
        if a != b {
            differing.push(name);
        }
    }
    let sm_blind = SmModel::fit(&masked, &config.clustering, &config.classifier, 9).unwrap().impute(&masked).unwrap()
        == SmModel::fit(&garbage, &config.clustering, &config.classifier, 9).unwrap().impute(&garbage).unwrap();
    verdict(
        worst_sum <= PROBA_SUM_TOL && !negative && outside == 0 && differing.is_empty() && sm_blind,
        format!(
            "max |sum p - 1| {worst_sum:.1e}, negative probabilities: {negative}, out-of-range imputations {outside}/20000, \
             mask-sensitive methods {differing:?}"
        ),
    )
}

fn lattice(side: usize) -> Vec<[f64; 2]> {
    (0..side * side).map(|i| [(i % side) as f64, (i / side) as f64]).collect()
}

fn spatial_stats() -> Verdict {
    let pts = lattice(20);
    let board: Vec<f64> = pts.iter().map(|p| ((p[0] + p[1]) as usize % 2) as f64).collect();
    let rook = morans_i(&board, &SpatialWeights::distance_band(&pts, 1.0).unwrap()).unwrap();
    let knn = morans_i(&board, &SpatialWeights::knn(&pts, 4).unwrap()).unwrap();

    let mut rng = rng_from_seed(5);
    let field: Vec<f64> = pts.iter().map(|p| p[0] + p[1] + rng.gen_range(-0.5..0.5)).collect();
    let (field_i, p) = morans_i_permutation_p(&field, &SpatialWeights::knn(&pts, 4).unwrap(), 999, SEED).unwrap();

    // Groups {1,2,3}, {4,5,6}, {7,8,9}: SSB = 54 on 2 df, SSW = 6 on 6 df, F = 27.
    let groups = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]];
    let (f, _) = anova_f(&groups).unwrap();

    let mut self_r = true;
    for _ in 0..100 {
        let x: Vec<f64> = (0..rng.gen_range(2..200)).map(|_| rng.gen_range(-1e3..1e3)).collect();
        self_r &= pearson_r(&x, &x).unwrap() == 1.0;
    }
    verdict(
        (rook + 1.0).abs() <= CHECKERBOARD_TOL && p == P_FLOOR && (f - 27.0).abs() <= ANOVA_TOL && self_r,
        format!(
            "checkerboard I {rook:.4} with rook neighbors (k=4 nearest: {knn:.4}), field I {field_i:.3} p {p}, \
             F {f}, pearson(x,x)=1: {self_r}"
        ),
    )
}

fn smimpute(args: &[&str]) -> (bool, Duration, String) {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_smimpute")).args(args).env_remove("SM_IMPUTE_SEED").output().unwrap();
    (out.status.success(), start.elapsed(), String::from_utf8_lossy(&out.stderr).into_owned())
}

/// Rebuilds every repetition's masked table and compares fingerprints.
fn fingerprints_match(table: &BlockTable, report: &EvalReport) -> usize {
    let eligible = table.complete_indices();
    report
        .repetitions
        .iter()
        .filter(|rec| {
            let rate = report.rates[rec.rate_index];
            let seed = repetition_seed(report.master_seed, rate, rec.rep);
            let mask = generate_mask(eligible.len(), rate, seed).unwrap();
            let hidden: Vec<(usize, Feature)> =
                mask.indices.iter().flat_map(|&i| [(eligible[i], Feature::Fsi), (eligible[i], Feature::Gsi)]).collect();
            table.with_hidden(&hidden).fingerprint() == rec.fingerprint
        })
        .count()
}

struct ProtocolRun {
    ok: bool,
    elapsed: Duration,
    identical: bool,
    fingerprints: usize,
    repetitions: usize,
}

fn run_protocol(dir: &Path, n_blocks: usize, reps: usize, threads: [&str; 2]) -> ProtocolRun {
    let table = generate_city(&SynthConfig { n_blocks, seed: SEED, ..Default::default() }).unwrap().0;
    let (nb, rp) = (n_blocks.to_string(), reps.to_string());
    let run = |name: &str, threads: &str| {
        let out = dir.join(name);
        let (ok, elapsed, stderr) = smimpute(&[
            "--threads",
            threads,
            "--seed",
            "42",
            "evaluate",
            "-o",
            out.to_str().unwrap(),
            "--rates",
            "0.1:0.7:0.1",
            "--reps",
            &rp,
            "--n-blocks",
            &nb,
        ]);
        if !ok {
            eprintln!("{stderr}");
        }
        (ok, elapsed, out)
    };
    let (ok_a, t_a, a) = run("a", threads[0]);
    let (ok_b, t_b, b) = run("b", threads[1]);
    let ok = ok_a && ok_b;
    if !ok {
        return ProtocolRun { ok, elapsed: t_a.max(t_b), identical: false, fingerprints: 0, repetitions: 0 };
    }
    let identical = ["report.json", "report.csv", "curve.csv"]
        .iter()
        .all(|f| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap());
    let report: EvalReport = serde_json::from_slice(&std::fs::read(a.join("report.json")).unwrap()).unwrap();
    ProtocolRun {
        ok,
        elapsed: t_a.max(t_b),
        identical,
        fingerprints: fingerprints_match(&table, &report),
        repetitions: report.repetitions.len(),
    }
}

fn protocol_shape() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let full = std::env::var("SM_IMPUTE_ACCEPTANCE_FULL").is_ok_and(|v| v == "1");
    let (n_blocks, reps) = if full { (5000, 100) } else { (1000, 3) };
    let r = run_protocol(dir.path(), n_blocks, reps, ["1", "2"]);
    let expected = 7 * reps;
    let shape_ok = r.ok && r.identical && r.repetitions == expected && r.fingerprints == expected;
    let detail = format!(
        "{n_blocks} blocks, 7 rates × {reps} reps, 7 methods: slowest run {:.1}s, bit-identical: {}, \
         fingerprints verified {}/{expected}",
        r.elapsed.as_secs_f64(),
        r.identical,
        r.fingerprints
    );
    if full {
        verdict(shape_ok && r.elapsed < PROTOCOL_BUDGET, format!("{detail}, budget {}s", PROTOCOL_BUDGET.as_secs()))
    } else if shape_ok {
        Skipped(format!("full-scale timing not run, set SM_IMPUTE_ACCEPTANCE_FULL=1; reduced run passed: {detail}"))
    } else {
        Fail(detail)
    }
}

fn directional_ordering() -> Verdict {
    let config = RunConfig::default();
    let (city, _) = generate_city(&config.synth).unwrap();
    let registry = ImputerRegistry::default();
    let methods: Vec<Arc<dyn Imputer>> = STANDARD_METHODS.iter().map(|m| registry.build(m, &config).unwrap()).collect();
    let bench = BenchmarkConfig { rates: vec![0.3], reps: 20, ..Default::default() };
    let report = run_benchmark(&city, &methods, &bench, SEED, serde_json::json!({})).unwrap();
    let check = directional_check(&report, &[("idw", "sm+idw"), ("sknn", "sm+sknn")], "smvnmf");
    let margins: Vec<String> = check
        .checks
        .iter()
        .map(|c| format!("{}: margin {:.4} ± {:.4}", c.description, c.mean_margin, c.std_error))
        .collect();
    let mut detail = format!("{}; worst {:?}", margins.join("; "), check.worst_method);
    if let Some(cal) = &check.calibration {
        detail.push_str(&format!("; calibration report: {}", serde_json::to_string(cal).unwrap()));
    }
    verdict(check.passed, detail)
}

fn reference_values() -> Verdict {
    let Ok(path) = std::env::var("SM_IMPUTE_SPB_DATA") else {
        return Skipped("set SM_IMPUTE_SPB_DATA to the original block table".into());
    };
    let reps = std::env::var("SM_IMPUTE_SPB_REPS").ok().and_then(|v| v.parse().ok()).unwrap_or(100);
    let path = Path::new(&path);
    let table = load_table(path, TableFormat::from_path(path)).unwrap();
    let config = RunConfig::default();
    let registry = ImputerRegistry::default();
    let methods: Vec<Arc<dyn Imputer>> =
        REFERENCE_MAE.iter().map(|(m, _)| registry.build(m, &config).unwrap()).collect();
    let bench = BenchmarkConfig { reps, ..Default::default() };
    let report = run_benchmark(&table, &methods, &bench, SEED, serde_json::json!({})).unwrap();
    let mut ok = true;
    let cells: Vec<String> = REFERENCE_MAE
        .iter()
        .map(|&(m, want)| {
            let got = report.pooled.iter().find(|p| p.method == m).and_then(|p| p.mae).unwrap_or(f64::NAN);
            ok &= (got - want).abs() <= REFERENCE_TOL;
            format!("{m} {got:.4} vs {want}")
        })
        .collect();
    verdict(ok, format!("{reps} reps: {}", cells.join(", ")))
}

fn synthetic_calibration() -> Verdict {
    let (city, _) = generate_city(&SynthConfig::default()).unwrap();
    let fsi: Vec<f64> = city.iter().map(|r| r.fsi.unwrap()).collect();
    let gsi: Vec<f64> = city.iter().map(|r| r.gsi.unwrap()).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mf, mg) = (mean(&fsi), mean(&gsi));
    let r = pearson_r(&fsi, &gsi).unwrap();
    let stats = stats_report(&city, &StatsConfig::default(), SEED).unwrap();
    let ok = ((mf - TARGET_FSI_MEAN) / TARGET_FSI_MEAN).abs() <= MEAN_REL_TOL
        && ((mg - TARGET_GSI_MEAN) / TARGET_GSI_MEAN).abs() <= MEAN_REL_TOL
        && (PEARSON_RANGE.0..=PEARSON_RANGE.1).contains(&r)
        && [&stats.fsi, &stats.gsi].iter().all(|s| s.morans_i > MORAN_MIN && s.morans_p == P_FLOOR);
    verdict(
        ok,
        format!(
            "mean FSI {mf:.4} GSI {mg:.4}, pearson r {r:.3}, Moran's I FSI {:.3} (p {}) GSI {:.3} (p {})",
            stats.fsi.morans_i, stats.fsi.morans_p, stats.gsi.morans_i, stats.gsi.morans_p
        ),
    )
}
