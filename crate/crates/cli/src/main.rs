//! `smimpute`: impute, evaluate, stats, synth and model persistence.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error as ThisError;

use smimpute::evaluation::{directional_check, run_benchmark, MaskMode};
use smimpute::io::{load_table, save_imputed, save_table, ModelDocument, Provenance, TableFormat};
use smimpute::sm::SmModel;
use smimpute::stats::stats_report;
use smimpute::synth::generate_city;
use smimpute::{BlockTable, Error, ImputeContext, Imputation, Imputer, ImputerRegistry, RunConfig};

/// Master seed when neither flag, config file nor environment supplies one.
const DEFAULT_SEED: u64 = 42;
const SEED_ENV: &str = "SM_IMPUTE_SEED";
const DEFAULT_METHOD: &str = "sm+idw";

/// Baseline/hybrid pairs whose ordering `evaluate` checks, and the method expected last.
const ORDERING_PAIRS: [(&str, &str); 2] = [("idw", "sm+idw"), ("sknn", "sm+sknn")];
const EXPECTED_WORST: &str = "smvnmf";

#[derive(Debug, Parser)]
#[command(name = "smimpute", version, about = "Impute missing FSI and GSI values for urban blocks")]
struct Cli {
    /// TOML configuration file. Command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Master seed. Falls back to the config file, then SM_IMPUTE_SEED, then 42.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a method on one table and fill its missing targets.
    Impute(ImputeArgs),
    /// Run the masked benchmark and write JSON and CSV reports.
    Evaluate(EvaluateArgs),
    /// Spatial autocorrelation, land-use ANOVA and target correlations.
    Stats(StatsArgs),
    /// Generate a synthetic city with known ground truth.
    Synth(SynthArgs),
    /// Persist or inspect a fitted cluster model and classifier.
    #[command(subcommand)]
    Model(ModelCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Geojson,
}

#[derive(Debug, Args)]
struct Input {
    /// Block table (CSV or GeoJSON).
    #[arg(long, short)]
    input: PathBuf,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

impl Input {
    fn load(&self) -> Result<BlockTable, CliError> {
        Ok(load_table(&self.input, resolve_format(&self.input, self.format))?)
    }
}

#[derive(Debug, Args)]
struct ImputeArgs {
    #[command(flatten)]
    input: Input,
    /// Output CSV; a `.meta.json` sidecar is written next to it.
    #[arg(long, short)]
    output: PathBuf,
    /// Method name, e.g. sm, idw, sknn, smvnmf or a hybrid such as sm+idw.
    #[arg(long, short)]
    method: Option<String>,
    /// Hybrid weight on the first component.
    #[arg(long)]
    alpha: Option<f64>,
    /// Use a model saved by `model fit` wherever the method needs `sm`.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Ground-truth table. Without it a synthetic city is generated from the config.
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Output directory for report.json, report.csv and curve.csv.
    #[arg(long, short)]
    out: PathBuf,
    /// `start:stop:step` (inclusive) or a comma-separated list.
    #[arg(long)]
    rates: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated method names.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long, value_enum)]
    mask_mode: Option<MaskModeArg>,
    /// Size of the generated city when no input is given.
    #[arg(long)]
    n_blocks: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MaskModeArg {
    Joint,
    Independent,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[command(flatten)]
    input: Input,
    /// Write the JSON report here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Permutations for the Moran's I test.
    #[arg(long)]
    n_perm: Option<usize>,
    /// Neighbors per block in the spatial weights.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output CSV.
    #[arg(long, short)]
    output: PathBuf,
    /// Regime labels per block; defaults to `<output>.labels.csv`.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    n_blocks: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum ModelCommand {
    /// Fit clusters and classifier on the complete blocks of a table.
    Fit {
        #[command(flatten)]
        input: Input,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Print a summary of a saved model.
    Show {
        #[arg(long, short)]
        model: PathBuf,
    },
}

#[derive(Debug, ThisError)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(Error::InvalidConfig(_) | Error::UnknownStrategy { .. }) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

fn resolve_format(path: &Path, format: Option<FormatArg>) -> TableFormat {
    match format {
        Some(FormatArg::Csv) => TableFormat::Csv,
        Some(FormatArg::Geojson) => TableFormat::GeoJson,
        None => TableFormat::from_path(path),
    }
}

/// Parses `start:stop:step` (inclusive of `stop`) or `a,b,c`. Values are
/// rounded to 1e-9 so that `0.1:0.7:0.1` yields exactly 0.1, 0.2, ..., 0.7.
fn parse_rates(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("invalid --rates `{s}`"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    let round = |x: f64| (x * 1e9).round() / 1e9;
    let rates = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, step] = parts[..] else { return Err(bad()) };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| round(start + i as f64 * step)).collect()
    } else {
        s.split(',').map(|t| num(t).map(round)).collect::<Result<Vec<_>, _>>()?
    };
    if rates.is_empty() {
        return Err(bad());
    }
    Ok(rates)
}

/// Config file (TOML) with unknown keys rejected, or defaults.
fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else { return Ok(RunConfig::default()) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn master_seed(cli: &Cli, config: &RunConfig) -> Result<u64, CliError> {
    if let Some(s) = cli.seed.or(config.seed) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Usage(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    match path {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
            _ => {}
        },
    }
    Ok(())
}

/// Serves `sm` from a saved model instead of refitting.
struct SavedSm(SmModel);

impl Imputer for SavedSm {
    fn name(&self) -> &str {
        "sm"
    }

    fn impute(&self, ctx: &ImputeContext<'_>) -> smimpute::Result<Imputation> {
        self.0.impute(ctx.table())
    }
}

fn impute(args: &ImputeArgs, mut config: RunConfig, seed: u64) -> Result<(), CliError> {
    if let Some(a) = args.alpha {
        config.hybrid.alpha = a;
    }
    let method = args.method.clone().or_else(|| config.method.clone()).unwrap_or_else(|| DEFAULT_METHOD.into());
    config.method = Some(method.clone());
    config.validate()?;
    let table = args.input.load()?;

    let mut registry = ImputerRegistry::default();
    if let Some(path) = &args.model {
        let model = Arc::new(SavedSm(ModelDocument::load(path)?.into_model(&config.classifier)?));
        registry.register("sm", move |_| model.clone());
    }
    let imputer = registry.build(&method, &config)?;
    let ctx = ImputeContext::new(&table, seed);
    let filled = ctx.run(imputer.as_ref())?;
    let provenance = Provenance {
        method: imputer.name().to_string(),
        config_hash: config.hash(),
        seed,
        timestamp: chrono::Utc::now().to_rfc3339(),
    };
    save_imputed(&args.output, &table, &filled, &provenance)?;
    log::info!("imputed {} blocks with {}", filled.len(), imputer.name());
    Ok(())
}

fn evaluate(args: &EvaluateArgs, mut config: RunConfig, seed: u64) -> Result<(), CliError> {
    if let Some(r) = &args.rates {
        config.evaluate.rates = parse_rates(r)?;
    }
    if let Some(n) = args.reps {
        config.evaluate.reps = n;
    }
    if let Some(m) = &args.methods {
        config.evaluate.methods = m.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    if let Some(mode) = args.mask_mode {
        config.evaluate.mask_mode = match mode {
            MaskModeArg::Joint => MaskMode::Joint,
            MaskModeArg::Independent => MaskMode::Independent,
        };
    }
    if let Some(n) = args.n_blocks {
        config.synth.n_blocks = n;
    }
    config.seed = Some(seed);
    config.validate()?;

    let table = match &args.input {
        Some(p) => load_table(p, resolve_format(p, args.format))?,
        None => generate_city(&config.synth)?.0,
    };
    let registry = ImputerRegistry::default();
    let methods: Vec<Arc<dyn Imputer>> =
        config.evaluate.methods.iter().map(|m| registry.build(m, &config)).collect::<Result<_, _>>()?;
    let snapshot = serde_json::to_value(&config).map_err(|e| CliError::Internal(e.to_string()))?;
    let report = run_benchmark(&table, &methods, &config.evaluate, seed, snapshot)?;

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("report.json"), report.to_json()? + "\n")?;
    let mut flat = BufWriter::new(File::create(args.out.join("report.csv"))?);
    report.write_flat_csv(&mut flat)?;
    flat.flush()?;
    let mut curve = BufWriter::new(File::create(args.out.join("curve.csv"))?);
    report.write_curve_csv(&mut curve)?;
    curve.flush()?;

    println!("{:<12} {:>8} {:>8} {:>8}", "method", "MAE", "RMSE", "R2");
    let cell = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |x| format!("{x:.4}"));
    for p in &report.pooled {
        println!("{:<12} {:>8} {:>8} {:>8}", p.method, cell(p.mae), cell(p.rmse), cell(p.r2));
    }
    if !report.failures.is_empty() {
        eprintln!("warning: {} method runs failed and were excluded", report.failures.len());
    }

    let needed = ORDERING_PAIRS.iter().flat_map(|(a, b)| [*a, *b]).chain([EXPECTED_WORST]);
    if needed.into_iter().all(|m| report.method_index(m).is_some()) {
        let check = directional_check(&report, &ORDERING_PAIRS, EXPECTED_WORST);
        if !check.passed {
            eprintln!("warning: method ordering differs from the expected pattern; see calibration.json");
            write_json(Some(&args.out.join("calibration.json")), &check)?;
        }
        write_json(Some(&args.out.join("ordering.json")), &check)?;
    }
    Ok(())
}

fn stats(args: &StatsArgs, mut config: RunConfig, seed: u64) -> Result<(), CliError> {
    if let Some(n) = args.n_perm {
        config.stats.n_perm = n;
    }
    if let Some(k) = args.k {
        config.stats.weights_k = k;
    }
    config.validate()?;
    let table = args.input.load()?;
    let report = stats_report(&table, &config.stats, seed)?;
    write_json(args.output.as_deref(), &report)
}

fn synth(args: &SynthArgs, mut config: RunConfig, seed: Option<u64>) -> Result<(), CliError> {
    if let Some(n) = args.n_blocks {
        config.synth.n_blocks = n;
    }
    if let Some(s) = seed {
        config.synth.seed = s;
    }
    config.validate()?;
    let (table, labels) = generate_city(&config.synth)?;
    save_table(&args.output, &table)?;
    let labels_path = args.labels.clone().unwrap_or_else(|| {
        let mut p = args.output.clone().into_os_string();
        p.push(".labels.csv");
        p.into()
    });
    let mut w = BufWriter::new(File::create(&labels_path)?);
    writeln!(w, "block_id,regime")?;
    for (r, l) in table.iter().zip(&labels) {
        writeln!(w, "{},{l}", r.id)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ModelSummary<'a> {
    format: &'a str,
    config_hash: &'a str,
    seed: u64,
    k: usize,
    cluster_sizes: &'a [usize],
    medians: Vec<[f64; 2]>,
    inertia: f64,
    classifier_kind: &'a str,
}

fn model(cmd: &ModelCommand, config: RunConfig, seed: u64) -> Result<(), CliError> {
    config.validate()?;
    match cmd {
        ModelCommand::Fit { input, output } => {
            let table = input.load()?;
            let model = SmModel::fit(&table, &config.clustering, &config.classifier, seed)?;
            ModelDocument::from_model(&model, &config.hash(), seed).save(output)?;
            log::info!("saved model with k = {}", model.clusters.k);
        }
        ModelCommand::Show { model } => {
            let doc = ModelDocument::load(model)?;
            let c = &doc.clusters;
            write_json(
                None,
                &ModelSummary {
                    format: &doc.format,
                    config_hash: &doc.config_hash,
                    seed: doc.seed,
                    k: c.k,
                    cluster_sizes: &c.sizes,
                    medians: c.medians.iter().map(|m| [m.fsi, m.gsi]).collect(),
                    inertia: c.inertia,
                    classifier_kind: &doc.classifier_kind,
                },
            )?;
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let config = load_config(cli.config.as_deref())?;
    let seed = master_seed(cli, &config)?;
    match &cli.command {
        Command::Impute(a) => impute(a, config, seed),
        Command::Evaluate(a) => evaluate(a, config, seed),
        Command::Stats(a) => stats(a, config, seed),
        Command::Synth(a) => {
            let explicit = cli.seed.is_some() || config.seed.is_some() || std::env::var_os(SEED_ENV).is_some();
            synth(a, config, explicit.then_some(seed))
        }
        Command::Model(c) => model(c, config, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    let outcome = panic::catch_unwind(AssertUnwindSafe(|| run(&cli)))
        .unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(CliError::Internal(msg.unwrap_or_else(|| "panic".into())))
        });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
