//! `neupred` command-line driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation error, 3 runtime error.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use neupred::arch::canonical_hash;
use neupred::gcn::{fit_with_protocol, GcnModel, LabeledSample};
use neupred::metrics::{speedup_ratio, BudgetAxis, CurveMetric};
use neupred::oracle::{RunSampler, SignalOracle, SynthConfig, SynthOracle};
use neupred::runner::{
    aggregate_curves, curves_from_lines, default_grid, read_result_lines, run_experiment, write_csv, write_csv_to,
    ExperimentConfig, OracleSource, DEFAULT_NOISE_SD, ENV_OUT_DIR,
};
use neupred::search::{Budget, DistinctSampler, PredictorSearchConfig, Strategy};
use neupred::{ArchGraph, Error, SpaceSpec};

#[derive(Parser)]
#[command(name = "neupred", version, about = "Neural-predictor architecture search experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a GCN accuracy regressor on sampled architectures and save it.
    TrainPredictor(TrainArgs),
    /// Predict accuracies with a saved regressor.
    Predict(PredictArgs),
    /// Run a search experiment and write result files.
    Search(SearchArgs),
    /// Speedup table between two result files.
    Compare(CompareArgs),
    /// Recompute the aggregate CSV of a result file.
    Report(ReportArgs),
    /// Write a synthetic benchmark as a tabular file.
    GenSyntheticTable(GenArgs),
}

#[derive(Args, Clone)]
struct OracleArgs {
    /// Tabular benchmark file.
    #[arg(long, conflicts_with = "synthetic")]
    oracle_file: Option<PathBuf>,
    /// Use the seeded synthetic benchmark.
    #[arg(long)]
    synthetic: bool,
    /// Run-to-run accuracy noise of the synthetic benchmark, in percent.
    #[arg(long, requires = "synthetic")]
    noise_sd: Option<f64>,
    /// Seed of the synthetic benchmark.
    #[arg(long, requires = "synthetic")]
    oracle_seed: Option<u64>,
}

impl OracleArgs {
    fn source(&self, space: SpaceSpec) -> Option<OracleSource> {
        if let Some(p) = &self.oracle_file {
            Some(OracleSource::Table(p.clone()))
        } else if self.synthetic {
            Some(OracleSource::Synthetic(SynthConfig::new(
                space,
                self.noise_sd.unwrap_or(DEFAULT_NOISE_SD),
                self.oracle_seed.unwrap_or(0),
            )))
        } else {
            None
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = "synthetic")]
    space: SpaceSpec,
    #[command(flatten)]
    oracle: OracleArgs,
    /// Number of training architectures.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Checkpoint written by train-predictor.
    #[arg(long)]
    model: PathBuf,
    /// Architecture as `ops=a,b,..;adj=bits`; repeatable.
    #[arg(long = "arch")]
    archs: Vec<String>,
    /// File with one architecture per line.
    #[arg(long)]
    archs_file: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    space: Option<SpaceSpec>,
    /// Budget as a number of trained models.
    #[arg(long, conflicts_with = "budget_seconds")]
    budget_models: Option<usize>,
    /// Budget as simulated training seconds.
    #[arg(long)]
    budget_seconds: Option<f64>,
    #[command(flatten)]
    oracle: OracleArgs,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Predictor training-set size N.
    #[arg(long)]
    n_train: Option<usize>,
    /// Output prefix; `.jsonl`, `.csv` and `.summary.json` are appended.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Result file of strategy A.
    a: PathBuf,
    /// Result file of strategy B.
    b: PathBuf,
    #[arg(long, default_value = "models")]
    axis: AxisArg,
    #[arg(long, default_value = "test")]
    metric: MetricArg,
    /// Accuracy targets (default: five levels up to A's final mean).
    #[arg(long, value_delimiter = ',')]
    targets: Vec<f64>,
}

#[derive(Args)]
struct ReportArgs {
    results: PathBuf,
    #[arg(long, default_value = "models")]
    axis: AxisArg,
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    /// CSV path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "synthetic")]
    space: SpaceSpec,
    #[arg(long, default_value_t = DEFAULT_NOISE_SD)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    oracle_seed: u64,
    /// Rows to sample for spaces too large to enumerate.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum AxisArg {
    Models,
    Seconds,
}

impl From<AxisArg> for BudgetAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Models => Self::Models,
            AxisArg::Seconds => Self::Seconds,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MetricArg {
    Test,
    Val,
}

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::Config(_)
            | Error::InvalidArgument(_)
            | Error::InvalidArch(_)
            | Error::Parse(_)
            | Error::OpOutOfRange { .. },
        ) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::TrainPredictor(a) => train_predictor(a),
        Command::Predict(a) => predict(a),
        Command::Search(a) => search(a),
        Command::Compare(a) => compare(a),
        Command::Report(a) => report(a),
        Command::GenSyntheticTable(a) => gen_table(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn missing(what: &str) -> anyhow::Error {
    Error::Config(format!("missing required option: {what}")).into()
}

fn out_path(path: PathBuf) -> PathBuf {
    match std::env::var(ENV_OUT_DIR) {
        Ok(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path,
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn train_predictor(a: TrainArgs) -> anyhow::Result<()> {
    let source = a.oracle.source(a.space).ok_or_else(|| missing("--oracle-file or --synthetic"))?;
    if let OracleSource::Table(p) = &source {
        if !p.is_file() {
            return Err(Error::Config(format!("oracle file {} does not exist", p.display())).into());
        }
    }
    if a.n < 3 {
        return Err(Error::Config("--n must be >= 3".into()).into());
    }
    let oracle = source.build()?;
    let view = SignalOracle::new(oracle.as_ref(), RunSampler::new(a.seed));
    let mut sampler = DistinctSampler::for_oracle(a.space, &view, a.seed);
    let mut data = Vec::with_capacity(a.n);
    while data.len() < a.n {
        let Some(arch) = sampler.next_arch() else { break };
        let signal = view.signal(&arch)?;
        data.push(LabeledSample::new(arch, signal.val_acc)?);
    }
    let cfg = PredictorSearchConfig::default_for(a.space);
    let model = fit_with_protocol(&data, &cfg.grid, &a.space.vocabulary(), &cfg.protocol, a.seed)?;
    let out = out_path(a.out);
    let mut w = create(&out)?;
    model.save(&mut w)?;
    w.flush()?;
    eprintln!("trained on {} architectures; wrote {}", data.len(), out.display());
    Ok(())
}

fn predict(a: PredictArgs) -> anyhow::Result<()> {
    let model = GcnModel::load(BufReader::new(
        File::open(&a.model).with_context(|| format!("opening {}", a.model.display()))?,
    ))?;
    let mut texts = a.archs;
    if let Some(path) = &a.archs_file {
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if !line.trim().is_empty() && !line.starts_with('#') {
                texts.push(line);
            }
        }
    }
    if texts.is_empty() {
        return Err(missing("--arch or --archs-file"));
    }
    let archs = texts.iter().map(|t| t.parse::<ArchGraph>()).collect::<neupred::Result<Vec<_>>>()?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for arch in &archs {
        writeln!(out, "{}\t{}\t{}", canonical_hash(arch), model.predict_accuracy(arch)?, arch)?;
    }
    Ok(())
}

fn search(a: SearchArgs) -> anyhow::Result<()> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::from_toml_path(path)?,
        None => {
            let strategy = a.strategy.ok_or_else(|| missing("--strategy"))?;
            let space = a.space.unwrap_or(SpaceSpec::Synthetic);
            let budget = match (a.budget_models, a.budget_seconds) {
                (Some(m), _) => Budget::Models(m),
                (None, Some(s)) => Budget::Seconds(s),
                (None, None) if strategy == Strategy::Oracle => Budget::Models(1),
                _ => return Err(missing("--budget-models or --budget-seconds")),
            };
            let oracle = a.oracle.source(space).ok_or_else(|| missing("--oracle-file or --synthetic"))?;
            ExperimentConfig::new(strategy, space, budget, oracle)
        }
    };
    if a.config.is_some() {
        if let Some(s) = a.strategy {
            cfg.strategy = s;
        }
        if let Some(m) = a.budget_models {
            cfg.budget = Budget::Models(m);
        }
        if let Some(s) = a.budget_seconds {
            cfg.budget = Budget::Seconds(s);
        }
        if let Some(o) = a.oracle.source(cfg.space) {
            cfg.oracle = o;
        }
    }
    if let Some(r) = a.replicas {
        cfg.replicas = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.n_train {
        cfg.predictor.n_train = n;
    }
    if let Some(out) = a.out {
        cfg.out = out;
    } else if a.config.is_none() {
        cfg.out = PathBuf::from(cfg.strategy.name());
    }
    cfg.apply_env()?;
    if let Some(t) = a.threads {
        cfg.parallelism = t;
    }
    cfg.validate()?;
    let summary = run_experiment(&cfg)?;
    println!(
        "{}: {} replicas, mean test {:.4} (sd {:.4}), mean val {:.4}; wrote {}",
        summary.strategy,
        summary.replicas,
        summary.mean_test,
        summary.sd_test,
        summary.mean_val,
        cfg.jsonl_path().display()
    );
    Ok(())
}

fn load_curves(path: &Path) -> anyhow::Result<Vec<neupred::metrics::ReplicaCurve>> {
    let lines = read_result_lines(path).with_context(|| format!("reading {}", path.display()))?;
    let curves = curves_from_lines(&lines);
    if curves.is_empty() {
        return Err(Error::InvalidArgument(format!("{} has no trajectory events", path.display())).into());
    }
    Ok(curves)
}

fn compare(a: CompareArgs) -> anyhow::Result<()> {
    let axis = BudgetAxis::from(a.axis);
    let metric = match a.metric {
        MetricArg::Test => CurveMetric::Test,
        MetricArg::Val => CurveMetric::Val,
    };
    let ca = load_curves(&a.a)?;
    let cb = load_curves(&a.b)?;
    let agg_a = aggregate_curves(&ca, axis, &default_grid(&ca, axis))?;
    let agg_b = aggregate_curves(&cb, axis, &default_grid(&cb, axis))?;
    let targets = if a.targets.is_empty() {
        let series = |agg: &neupred::metrics::RunAggregate| match metric {
            CurveMetric::Test => agg.mean_test.clone(),
            CurveMetric::Val => agg.mean_val.clone(),
        };
        let sa = series(&agg_a);
        let (lo, hi) = (sa[0], *sa.last().unwrap());
        (1..=5).map(|i| lo + (hi - lo) * f64::from(i) / 5.0).collect()
    } else {
        a.targets
    };
    println!("target,budget_a,budget_b,speedup");
    for t in targets {
        let ba = neupred::metrics::budget_to_reach(&agg_a, t, metric);
        let bb = neupred::metrics::budget_to_reach(&agg_b, t, metric);
        let fmt = |b: Option<f64>| b.map_or_else(|| "unreached".to_string(), |v| v.to_string());
        let speedup = speedup_ratio(&agg_a, &agg_b, t, metric)
            .ok()
            .map_or_else(|| "n/a".to_string(), |s| s.to_string());
        println!("{t},{},{},{speedup}", fmt(ba), fmt(bb));
    }
    Ok(())
}

fn report(a: ReportArgs) -> anyhow::Result<()> {
    let axis = BudgetAxis::from(a.axis);
    let curves = load_curves(&a.results)?;
    let grid = if a.grid.is_empty() { default_grid(&curves, axis) } else { a.grid };
    let agg = aggregate_curves(&curves, axis, &grid)?;
    match a.out {
        Some(path) => write_csv(&out_path(path), &agg)?,
        None => {
            let stdout = std::io::stdout();
            write_csv_to(&mut stdout.lock(), &agg)?;
        }
    }
    Ok(())
}

fn gen_table(a: GenArgs) -> anyhow::Result<()> {
    if !(a.noise_sd >= 0.0) {
        return Err(Error::Config("--noise-sd must be >= 0".into()).into());
    }
    let oracle = SynthOracle::new(SynthConfig::new(a.space, a.noise_sd, a.oracle_seed))?;
    let archs = match a.space.enumerate() {
        Some(all) => all,
        None => {
            let mut sampler = DistinctSampler::new(a.space, None, a.oracle_seed);
            std::iter::from_fn(|| sampler.next_arch()).take(a.samples).collect()
        }
    };
    let table = oracle.to_table(&archs)?;
    let out = out_path(a.out);
    let mut w = create(&out)?;
    table.dump(&mut w)?;
    w.flush()?;
    eprintln!("wrote {} rows to {}", table.len(), out.display());
    Ok(())
}
