//! Experiment configuration, replica orchestration and result files.
//!
//! A run writes three files next to the configured output prefix:
//! `<out>.jsonl` (one line per trained model, then one final line per
//! replica, in replica order), `<out>.csv` (mean/sd curves) and
//! `<out>.summary.json`. Only the summary holds wall-clock time, so the
//! JSON-lines file is byte-identical across reruns.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{ArchGraph, ArchKey, SpaceSpec};
use crate::error::{Error, Result};
use crate::gcn::{GcnConfig, OutputHead, SplitSpec};
use crate::metrics::{aggregate_runs, mean_sd, BudgetAxis, CurvePoint, ReplicaCurve, RunAggregate};
use crate::oracle::{
    query_final_report, BenchmarkOracle, RunSampler, SignalOracle, SynthConfig, SynthOracle, TableOracle,
    SYNTH_BAND_THRESHOLD,
};
use crate::search::{
    neural_predictor_search, oracle_search, random_search, regularized_evolution, Budget, EvolutionConfig,
    PredictorSearchConfig, Strategy, Trajectory,
};
use crate::seed::derive_seed;

/// Environment variable overriding the output directory.
pub const ENV_OUT_DIR: &str = "NEUPRED_OUT_DIR";
/// Environment variable overriding the number of worker threads.
pub const ENV_THREADS: &str = "NEUPRED_THREADS";

/// Where ground truth comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum OracleSource {
    Table(PathBuf),
    Synthetic(SynthConfig),
}

impl OracleSource {
    pub fn build(&self) -> Result<Box<dyn BenchmarkOracle>> {
        Ok(match self {
            Self::Table(path) => Box::new(TableOracle::load_path(path)?),
            Self::Synthetic(cfg) => Box::new(SynthOracle::new(*cfg)?),
        })
    }
}

/// A validated experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    pub space: SpaceSpec,
    pub budget: Budget,
    pub oracle: OracleSource,
    pub replicas: usize,
    pub seed: u64,
    pub parallelism: usize,
    /// Output prefix; extensions are appended.
    pub out: PathBuf,
    pub evolution: EvolutionConfig,
    pub predictor: PredictorSearchConfig,
    pub report_axis: BudgetAxis,
    pub report_grid: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    strategy: Option<String>,
    space: Option<String>,
    budget: Option<RawBudget>,
    oracle: Option<RawOracle>,
    replicas: Option<usize>,
    seed: Option<u64>,
    parallelism: Option<usize>,
    out: Option<PathBuf>,
    evolution: Option<EvolutionConfig>,
    predictor: Option<RawPredictor>,
    report: Option<RawReport>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBudget {
    models: Option<usize>,
    seconds: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOracle {
    table: Option<PathBuf>,
    synthetic: Option<RawSynth>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynth {
    noise_sd: Option<f64>,
    seed: Option<u64>,
    bad_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPredictor {
    n_train: Option<usize>,
    pool_size: Option<usize>,
    two_stage: Option<bool>,
    class_threshold: Option<f64>,
    param_growth: Option<f64>,
    cv_repeats: Option<usize>,
    cv_holdout: Option<f64>,
    grid: Option<Vec<GcnConfig>>,
    classifier: Option<GcnConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReport {
    axis: Option<BudgetAxis>,
    grid: Option<Vec<f64>>,
}

/// Default synthetic noise, in percent.
pub const DEFAULT_NOISE_SD: f64 = 0.3;

pub fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, usize::from)
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    /// Config with every optional field at its default.
    pub fn new(strategy: Strategy, space: SpaceSpec, budget: Budget, oracle: OracleSource) -> Self {
        let mut predictor = PredictorSearchConfig::default_for(space);
        if let (OracleSource::Synthetic(_), Some(c)) = (&oracle, predictor.classifier.as_mut()) {
            c.class_threshold = SYNTH_BAND_THRESHOLD;
        }
        Self {
            strategy,
            space,
            budget,
            oracle,
            replicas: 1,
            seed: 0,
            parallelism: default_parallelism(),
            out: PathBuf::from("results").join(strategy.name()),
            evolution: EvolutionConfig::for_space(space),
            predictor,
            report_axis: BudgetAxis::Models,
            report_grid: None,
        }
    }

    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Parses, defaults and range-checks a TOML config.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        let mut missing = Vec::new();
        if raw.strategy.is_none() {
            missing.push("strategy");
        }
        if raw.space.is_none() {
            missing.push("space");
        }
        if raw.budget.is_none() {
            missing.push("budget");
        }
        if raw.oracle.is_none() {
            missing.push("oracle");
        }
        if !missing.is_empty() {
            return Err(Error::Config(format!("missing required fields: {}", missing.join(", "))));
        }
        let strategy: Strategy = raw.strategy.unwrap().parse().map_err(|e| config_err("strategy", e))?;
        let space: SpaceSpec = raw.space.unwrap().parse().map_err(|e| config_err("space", e))?;
        let b = raw.budget.unwrap();
        let budget = match (b.models, b.seconds) {
            (Some(m), None) => Budget::Models(m),
            (None, Some(s)) => Budget::Seconds(s),
            _ => return Err(config_err("budget", "set exactly one of models, seconds")),
        };
        let o = raw.oracle.unwrap();
        let oracle = match (o.table, o.synthetic) {
            (Some(path), None) => OracleSource::Table(path),
            (None, Some(s)) => {
                let mut synth = SynthConfig::new(space, s.noise_sd.unwrap_or(DEFAULT_NOISE_SD), s.seed.unwrap_or(0));
                if let Some(f) = s.bad_fraction {
                    synth.bad_fraction = f;
                }
                OracleSource::Synthetic(synth)
            }
            _ => return Err(config_err("oracle", "set exactly one of table, synthetic")),
        };
        let mut cfg = Self::new(strategy, space, budget, oracle);
        if let Some(r) = raw.replicas {
            cfg.replicas = r;
        }
        if let Some(s) = raw.seed {
            cfg.seed = s;
        }
        if let Some(p) = raw.parallelism {
            cfg.parallelism = p;
        }
        if let Some(out) = raw.out {
            cfg.out = out;
        }
        if let Some(e) = raw.evolution {
            cfg.evolution = e;
        }
        if let Some(p) = raw.predictor {
            cfg.apply_predictor(p)?;
        }
        if let Some(r) = raw.report {
            if let Some(axis) = r.axis {
                cfg.report_axis = axis;
            }
            cfg.report_grid = r.grid;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_predictor(&mut self, p: RawPredictor) -> Result<()> {
        let pc = &mut self.predictor;
        if let Some(n) = p.n_train {
            pc.n_train = n;
        }
        if let Some(m) = p.pool_size {
            pc.pool_size = m;
        }
        if let Some(g) = p.grid {
            pc.grid = g;
        }
        if let Some(c) = p.classifier {
            pc.classifier = Some(c);
        }
        match p.two_stage {
            Some(false) => pc.classifier = None,
            Some(true) if pc.classifier.is_none() => {
                let base = pc.grid.first().cloned().unwrap_or_default();
                pc.classifier = Some(GcnConfig {
                    output_head: OutputHead::Classification,
                    lr0: GcnConfig::nasbench_classifier().lr0.max(base.lr0),
                    ..base
                });
            }
            _ => {}
        }
        if let (Some(t), Some(c)) = (p.class_threshold, pc.classifier.as_mut()) {
            c.class_threshold = t;
        }
        if let Some(g) = p.param_growth {
            pc.protocol.param_growth = g;
        }
        if let Some(r) = p.cv_repeats {
            pc.protocol.split.repeats = r;
        }
        if let Some(h) = p.cv_holdout {
            pc.protocol.split = SplitSpec { holdout: h, ..pc.protocol.split };
        }
        Ok(())
    }

    /// Range checks; applied by [`ExperimentConfig::from_toml`] and [`run_experiment`].
    pub fn validate(&self) -> Result<()> {
        self.budget.validate().map_err(|e| config_err("budget", e))?;
        if self.replicas == 0 {
            return Err(config_err("replicas", "must be >= 1"));
        }
        if self.parallelism == 0 {
            return Err(config_err("parallelism", "must be >= 1"));
        }
        self.evolution.validate().map_err(|e| config_err("evolution", e))?;
        let p = &self.predictor;
        if p.n_train < 3 {
            return Err(config_err("predictor.n_train", "must be >= 3"));
        }
        if p.grid.is_empty() {
            return Err(config_err("predictor.grid", "must list at least one config"));
        }
        for (i, g) in p.grid.iter().enumerate() {
            g.validate().map_err(|e| config_err(&format!("predictor.grid[{i}]"), e))?;
            if g.output_head != OutputHead::Regression {
                return Err(config_err(&format!("predictor.grid[{i}].output_head"), "must be regression"));
            }
        }
        if let Some(c) = &p.classifier {
            c.validate().map_err(|e| config_err("predictor.classifier", e))?;
            if c.output_head != OutputHead::Classification {
                return Err(config_err("predictor.classifier.output_head", "must be classification"));
            }
        }
        if !(0.0..1.0).contains(&p.protocol.split.holdout) || p.protocol.split.holdout == 0.0 {
            return Err(config_err("predictor.cv_holdout", "must be in (0, 1)"));
        }
        if p.protocol.split.repeats == 0 {
            return Err(config_err("predictor.cv_repeats", "must be >= 1"));
        }
        if self.strategy == Strategy::Predictor {
            if let Budget::Models(total) = self.budget {
                if total <= p.n_train {
                    return Err(config_err("budget.models", format!("must exceed predictor.n_train = {}", p.n_train)));
                }
                if p.pool_size < total - p.n_train {
                    return Err(config_err("predictor.pool_size", "must be at least K = budget - n_train"));
                }
            }
        }
        match &self.oracle {
            OracleSource::Table(path) => {
                if !path.is_file() {
                    return Err(config_err("oracle.table", format!("{} does not exist", path.display())));
                }
            }
            OracleSource::Synthetic(s) => {
                if s.space != self.space {
                    return Err(config_err("oracle.synthetic", "space differs from experiment space"));
                }
                if !(s.noise_sd >= 0.0) {
                    return Err(config_err("oracle.synthetic.noise_sd", "must be >= 0"));
                }
                if !(0.0..1.0).contains(&s.bad_fraction) {
                    return Err(config_err("oracle.synthetic.bad_fraction", "must be in [0, 1)"));
                }
            }
        }
        if let Some(g) = &self.report_grid {
            if g.is_empty() {
                return Err(config_err("report.grid", "must not be empty"));
            }
        }
        Ok(())
    }

    /// Applies the output-directory and thread-count environment overrides.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(dir) = std::env::var(ENV_OUT_DIR) {
            let name = self.out.file_name().map(PathBuf::from).unwrap_or_else(|| PathBuf::from(self.strategy.name()));
            self.out = PathBuf::from(dir).join(name);
        }
        if let Ok(t) = std::env::var(ENV_THREADS) {
            self.parallelism = t
                .parse()
                .ok()
                .filter(|&n: &usize| n > 0)
                .ok_or_else(|| config_err(ENV_THREADS, format!("{t:?} is not a positive integer")))?;
        }
        Ok(())
    }

    pub fn jsonl_path(&self) -> PathBuf {
        with_suffix(&self.out, ".jsonl")
    }

    pub fn csv_path(&self) -> PathBuf {
        with_suffix(&self.out, ".csv")
    }

    pub fn summary_path(&self) -> PathBuf {
        with_suffix(&self.out, ".summary.json")
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Seed of replica `index`; independent of the replica count.
pub fn replica_seed(base: u64, index: usize) -> u64 {
    derive_seed(base, &[index as u64])
}

/// One line of the JSON-lines results file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ResultLine {
    Event {
        strategy: Strategy,
        replica: usize,
        model_index: usize,
        cumulative_seconds: f64,
        arch: String,
        key: ArchKey,
        val_acc: f64,
        sel_key: ArchKey,
        sel_val: f64,
        sel_test: f64,
    },
    Final {
        strategy: Strategy,
        replica: usize,
        seed: u64,
        arch: String,
        key: ArchKey,
        val_acc: f64,
        test_acc: f64,
        models: usize,
        total_seconds: f64,
        exhausted: bool,
    },
}

/// Outcome of a single replica.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaResult {
    pub replica: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub trajectory: Trajectory,
    pub curve: ReplicaCurve,
}

impl ReplicaResult {
    pub fn final_test(&self) -> f64 {
        self.curve.last().map_or(f64::NAN, |p| p.test)
    }

    pub fn final_val(&self) -> f64 {
        self.curve.last().map_or(f64::NAN, |p| p.val)
    }

    pub fn lines(&self) -> Vec<ResultLine> {
        let sel = self.trajectory.running_selection();
        let mut out: Vec<ResultLine> = self
            .trajectory
            .events
            .iter()
            .zip(&self.curve)
            .zip(&sel)
            .map(|((e, p), &s)| ResultLine::Event {
                strategy: self.strategy,
                replica: self.replica,
                model_index: e.model_index,
                cumulative_seconds: e.cumulative_seconds,
                arch: e.arch.to_string(),
                key: e.key,
                val_acc: e.val_acc,
                sel_key: self.trajectory.events[s].key,
                sel_val: p.val,
                sel_test: p.test,
            })
            .collect();
        if let Some(sel) = self.trajectory.selection() {
            out.push(ResultLine::Final {
                strategy: self.strategy,
                replica: self.replica,
                seed: self.seed,
                arch: sel.arch.to_string(),
                key: sel.key,
                val_acc: sel.val_acc,
                test_acc: self.final_test(),
                models: self.trajectory.events.len(),
                total_seconds: self.trajectory.total_seconds(),
                exhausted: self.trajectory.exhausted,
            });
        }
        out
    }
}

/// Best-so-far curve of a trajectory: the selection's signal and its reported
/// test accuracy after every trained model.
pub fn selection_curve(oracle: &dyn BenchmarkOracle, traj: &Trajectory) -> Result<ReplicaCurve> {
    let mut tests: HashMap<ArchKey, f64> = HashMap::new();
    let mut curve = Vec::with_capacity(traj.events.len());
    for (e, s) in traj.events.iter().zip(traj.running_selection()) {
        let sel = &traj.events[s];
        let test = match tests.get(&sel.key) {
            Some(&t) => t,
            None => {
                let t = query_final_report(oracle, &sel.arch)?;
                tests.insert(sel.key, t);
                t
            }
        };
        curve.push(CurvePoint {
            models: e.model_index,
            seconds: e.cumulative_seconds,
            val: sel.val_acc,
            test,
        });
    }
    Ok(curve)
}

/// Runs the configured strategy for one replica. The strategy sees only
/// search signals; test accuracies are read afterwards for reporting.
pub fn run_replica(cfg: &ExperimentConfig, oracle: &dyn BenchmarkOracle, replica: usize) -> Result<ReplicaResult> {
    let seed = replica_seed(cfg.seed, replica);
    let view = SignalOracle::new(oracle, RunSampler::new(seed));
    let trajectory = match cfg.strategy {
        Strategy::Random => random_search(view, cfg.space, cfg.budget, seed)?,
        Strategy::Evolution => regularized_evolution(view, cfg.space, cfg.budget, &cfg.evolution, seed)?,
        Strategy::Predictor => neural_predictor_search(view, cfg.space, cfg.budget, &cfg.predictor, seed)?.trajectory,
        Strategy::Oracle => oracle_search(view)?,
    };
    let curve = selection_curve(oracle, &trajectory)?;
    Ok(ReplicaResult {
        replica,
        seed,
        strategy: cfg.strategy,
        trajectory,
        curve,
    })
}

/// Headline numbers of a finished experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: Strategy,
    pub space: String,
    pub replicas: usize,
    pub mean_test: f64,
    pub sd_test: f64,
    pub mean_val: f64,
    pub sd_val: f64,
    pub mean_total_seconds: f64,
    pub wall_seconds: f64,
    pub selections: Vec<SelectionSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub replica: usize,
    pub arch: String,
    pub key: ArchKey,
    pub val_acc: f64,
    pub test_acc: f64,
    pub total_seconds: f64,
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

/// Runs all replicas and writes the JSON-lines, CSV and summary files.
/// Replicas are computed in parallel batches and written in replica order,
/// flushing after each, so an interrupted run leaves a valid prefix.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let started = Instant::now();
    let oracle = cfg.oracle.build()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let jsonl = cfg.jsonl_path();
    ensure_parent(&jsonl)?;
    let mut writer = BufWriter::new(File::create(&jsonl)?);
    let mut results = Vec::with_capacity(cfg.replicas);
    let indices: Vec<usize> = (0..cfg.replicas).collect();
    for chunk in indices.chunks(cfg.parallelism) {
        let batch: Vec<ReplicaResult> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&r| run_replica(cfg, oracle.as_ref(), r))
                .collect::<Result<_>>()
        })?;
        for res in batch {
            write_lines(&mut writer, &res.lines())?;
            writer.flush()?;
            results.push(res);
        }
    }
    drop(writer);

    let curves: Vec<ReplicaCurve> = results.iter().map(|r| r.curve.clone()).collect();
    let grid = cfg
        .report_grid
        .clone()
        .unwrap_or_else(|| default_grid(&curves, cfg.report_axis));
    let csv = cfg.csv_path();
    write_csv(&csv, &aggregate_curves(&curves, cfg.report_axis, &grid)?)?;

    let tests: Vec<f64> = results.iter().map(ReplicaResult::final_test).collect();
    let vals: Vec<f64> = results.iter().map(ReplicaResult::final_val).collect();
    let secs: Vec<f64> = results.iter().map(|r| r.trajectory.total_seconds()).collect();
    let (mean_test, sd_test) = mean_sd(&tests);
    let (mean_val, sd_val) = mean_sd(&vals);
    let summary = RunSummary {
        strategy: cfg.strategy,
        space: cfg.space.to_string(),
        replicas: cfg.replicas,
        mean_test,
        sd_test,
        mean_val,
        sd_val,
        mean_total_seconds: mean_sd(&secs).0,
        wall_seconds: started.elapsed().as_secs_f64(),
        selections: results
            .iter()
            .filter_map(|r| {
                r.trajectory.selection().map(|s| SelectionSummary {
                    replica: r.replica,
                    arch: s.arch.to_string(),
                    key: s.key,
                    val_acc: s.val_acc,
                    test_acc: r.final_test(),
                    total_seconds: r.trajectory.total_seconds(),
                })
            })
            .collect(),
    };
    let summary_path = cfg.summary_path();
    let mut f = BufWriter::new(File::create(&summary_path)?);
    serde_json::to_writer_pretty(&mut f, &summary).map_err(|e| Error::Io(e.into()))?;
    writeln!(f)?;
    Ok(summary)
}

fn write_lines<W: Write>(w: &mut W, lines: &[ResultLine]) -> Result<()> {
    for line in lines {
        serde_json::to_writer(&mut *w, line).map_err(|e| Error::Io(e.into()))?;
        writeln!(w)?;
    }
    Ok(())
}

/// Every model count, or 100 evenly spaced times, up to the longest replica.
pub fn default_grid(curves: &[ReplicaCurve], axis: BudgetAxis) -> Vec<f64> {
    match axis {
        BudgetAxis::Models => {
            let max = curves.iter().filter_map(|c| c.last()).map(|p| p.models).max().unwrap_or(0);
            (1..=max).map(|m| m as f64).collect()
        }
        BudgetAxis::Seconds => {
            let max = curves
                .iter()
                .filter_map(|c| c.last())
                .map(|p| p.seconds)
                .fold(0.0, f64::max);
            (1..=100).map(|i| max * f64::from(i) / 100.0).collect()
        }
    }
}

/// Like [`aggregate_runs`] but also accepts a single replica (sd 0).
pub fn aggregate_curves(curves: &[ReplicaCurve], axis: BudgetAxis, grid: &[f64]) -> Result<RunAggregate> {
    if curves.len() == 1 {
        let doubled = [curves[0].clone(), curves[0].clone()];
        let mut agg = aggregate_runs(&doubled, axis, grid)?;
        agg.replicas = 1;
        return Ok(agg);
    }
    aggregate_runs(curves, axis, grid)
}

pub const CSV_HEADER: &str = "budget,mean_test,sd_test,mean_val,sd_val";

pub fn write_csv(path: &Path, agg: &RunAggregate) -> Result<()> {
    ensure_parent(path)?;
    let mut w = BufWriter::new(File::create(path)?);
    write_csv_to(&mut w, agg)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv_to<W: Write>(w: &mut W, agg: &RunAggregate) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for i in 0..agg.budgets.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            agg.budgets[i], agg.mean_test[i], agg.sd_test[i], agg.mean_val[i], agg.sd_val[i]
        )?;
    }
    Ok(())
}

/// Reads the result lines of a JSON-lines file.
pub fn read_result_lines(path: &Path) -> Result<Vec<ResultLine>> {
    let f = std::io::BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::TableParse {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Rebuilds per-replica curves from result lines, in replica order.
pub fn curves_from_lines(lines: &[ResultLine]) -> Vec<ReplicaCurve> {
    let mut by_replica: std::collections::BTreeMap<usize, ReplicaCurve> = std::collections::BTreeMap::new();
    for line in lines {
        if let ResultLine::Event {
            replica,
            model_index,
            cumulative_seconds,
            sel_val,
            sel_test,
            ..
        } = line
        {
            by_replica.entry(*replica).or_default().push(CurvePoint {
                models: *model_index,
                seconds: *cumulative_seconds,
                val: *sel_val,
                test: *sel_test,
            });
        }
    }
    by_replica.into_values().collect()
}

/// Parses an architecture from the text stored in result lines.
pub fn parse_arch(text: &str) -> Result<ArchGraph> {
    text.parse()
}
