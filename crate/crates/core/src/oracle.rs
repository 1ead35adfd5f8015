//! Ground-truth training results: tabular files and a synthetic benchmark.
//!
//! Searches only see a [`SignalOracle`], which exposes one sampled
//! validation run per architecture. The mean test accuracy is read through
//! [`query_final_report`] by the runner, after a selection has been made.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::arch::{canonical_hash, ArchGraph, ArchKey, SpaceSpec};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::tensor::sigmoid;

/// Independent training runs per architecture.
pub const RUNS_PER_ARCH: usize = 3;

/// Reference accuracies of the real NASBench-101 searches (not reproducible here).
pub mod reference {
    /// Oracle-selected model: validation accuracy and its test accuracy.
    pub const ORACLE_SELECTED_VAL: f64 = 95.15;
    pub const ORACLE_SELECTED_TEST: f64 = 94.08;
    /// Mean and sd of test accuracy over 100 oracle experiments.
    pub const ORACLE_TEST_MEAN: f64 = 94.18;
    pub const ORACLE_TEST_SD: f64 = 0.07;
    /// Random search at 2000 models.
    pub const RANDOM_2000_TEST_MEAN: f64 = 93.66;
    pub const RANDOM_2000_TEST_SD: f64 = 0.25;
    pub const EVOLUTION_TEST_MEAN: f64 = 93.97;
    /// Speed-up of the predictor over evolution to reach the same test accuracy.
    pub const PREDICTOR_SPEEDUP_OVER_EVOLUTION: f64 = 22.83;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunRecord {
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularRecord {
    pub arch: ArchGraph,
    pub key: ArchKey,
    /// Simulated training time of one run, in seconds.
    pub train_seconds: f64,
    pub runs: [RunRecord; RUNS_PER_ARCH],
    pub latency_ms: Option<f64>,
}

impl TabularRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        let acc_ok = |a: f64| a > 0.0 && a <= 100.0;
        if !(self.train_seconds > 0.0 && self.train_seconds.is_finite()) {
            return Err(format!("train_seconds {} must be > 0", self.train_seconds));
        }
        for r in &self.runs {
            if !acc_ok(r.val_acc) || !acc_ok(r.test_acc) {
                return Err(format!(
                    "accuracies ({}, {}) outside (0, 100]",
                    r.val_acc, r.test_acc
                ));
            }
        }
        if let Some(l) = self.latency_ms {
            if !(l > 0.0 && l.is_finite()) {
                return Err(format!("latency {l} must be > 0"));
            }
        }
        Ok(())
    }

    pub fn mean_test(&self) -> f64 {
        self.runs.iter().map(|r| r.test_acc).sum::<f64>() / RUNS_PER_ARCH as f64
    }
}

/// Read-only source of training outcomes, shared across replicas.
pub trait BenchmarkOracle: Send + Sync {
    fn record(&self, arch: &ArchGraph) -> Result<TabularRecord>;

    fn latency_ms(&self, arch: &ArchGraph) -> Result<f64>;

    /// Every architecture the oracle knows, when that set is finite and listable.
    fn architectures(&self) -> Option<Vec<ArchGraph>>;
}

/// Picks which of the runs a replica observes for each architecture. The
/// choice is a pure function of (seed, key), so repeated queries within a
/// replica see the same run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSampler {
    seed: u64,
}

impl RunSampler {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn run_index(&self, key: ArchKey) -> usize {
        (derive_seed(self.seed, &[key.0]) % RUNS_PER_ARCH as u64) as usize
    }
}

/// What a search observes after training one model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchSignal {
    pub val_acc: f64,
    pub cost_seconds: f64,
}

pub fn query_search_signal(
    oracle: &dyn BenchmarkOracle,
    arch: &ArchGraph,
    sampler: &RunSampler,
) -> Result<SearchSignal> {
    let rec = oracle.record(arch)?;
    Ok(SearchSignal {
        val_acc: rec.runs[sampler.run_index(rec.key)].val_acc,
        cost_seconds: rec.train_seconds,
    })
}

/// Mean test accuracy over all runs.
pub fn query_final_report(oracle: &dyn BenchmarkOracle, arch: &ArchGraph) -> Result<f64> {
    Ok(oracle.record(arch)?.mean_test())
}

pub fn query_latency(oracle: &dyn BenchmarkOracle, arch: &ArchGraph) -> Result<f64> {
    oracle.latency_ms(arch)
}

/// The view of an oracle given to search strategies: search signals and
/// latencies only.
#[derive(Clone, Copy)]
pub struct SignalOracle<'a> {
    inner: &'a dyn BenchmarkOracle,
    sampler: RunSampler,
}

impl<'a> SignalOracle<'a> {
    pub fn new(inner: &'a dyn BenchmarkOracle, sampler: RunSampler) -> Self {
        Self { inner, sampler }
    }

    pub fn signal(&self, arch: &ArchGraph) -> Result<SearchSignal> {
        query_search_signal(self.inner, arch, &self.sampler)
    }

    pub fn latency(&self, arch: &ArchGraph) -> Result<f64> {
        self.inner.latency_ms(arch)
    }

    pub fn architectures(&self) -> Option<Vec<ArchGraph>> {
        self.inner.architectures()
    }

    pub fn sampler(&self) -> RunSampler {
        self.sampler
    }
}

const FIELDS: &str = "hash,ops,adj,train_s,v1,t1,v2,t2,v3,t3";
const LATENCY_FIELD: &str = "latency_ms";

/// In-memory tabular benchmark keyed by canonical hash, in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TableOracle {
    records: Vec<TabularRecord>,
    index: HashMap<ArchKey, usize>,
    has_latency: bool,
}

impl TableOracle {
    /// Builds a table; every record must carry a latency or none may.
    pub fn from_records(records: Vec<TabularRecord>) -> Result<Self> {
        let has_latency = records.first().is_some_and(|r| r.latency_ms.is_some());
        let mut table = Self {
            records: Vec::with_capacity(records.len()),
            index: HashMap::new(),
            has_latency,
        };
        for rec in records {
            if rec.latency_ms.is_some() != has_latency {
                return Err(Error::InvalidArgument(
                    "latency column must be present for all records or none".into(),
                ));
            }
            rec.validate().map_err(Error::InvalidArgument)?;
            table.insert(rec)?;
        }
        Ok(table)
    }

    fn insert(&mut self, rec: TabularRecord) -> Result<()> {
        if self.index.insert(rec.key, self.records.len()).is_some() {
            return Err(Error::DuplicateKey(rec.key));
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[TabularRecord] {
        &self.records
    }

    pub fn has_latency(&self) -> bool {
        self.has_latency
    }

    pub fn load_path(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(f))
    }

    /// Parses the tab-separated format written by [`TableOracle::dump`].
    pub fn load<R: BufRead>(r: R) -> Result<Self> {
        let mut table = Self::default();
        let mut saw_header = false;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let err = |msg: String| Error::TableParse { line: lineno, msg };
            if line.is_empty() {
                continue;
            }
            if !saw_header {
                table.has_latency = parse_header(&line).map_err(err)?;
                saw_header = true;
                continue;
            }
            let rec = parse_record(&line, table.has_latency).map_err(err)?;
            if table.index.contains_key(&rec.key) {
                return Err(err(format!("duplicate key {}", rec.key)));
            }
            table.insert(rec)?;
        }
        Ok(table)
    }

    pub fn dump<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "#R={RUNS_PER_ARCH}\tfields={FIELDS}")?;
        if self.has_latency {
            write!(w, ",{LATENCY_FIELD}")?;
        }
        writeln!(w)?;
        for rec in &self.records {
            write!(
                w,
                "{}\t{}\t{}\t{}",
                rec.key,
                rec.arch.ops_csv(),
                rec.arch.adjacency_bits(),
                rec.train_seconds
            )?;
            for run in &rec.runs {
                write!(w, "\t{}\t{}", run.val_acc, run.test_acc)?;
            }
            if let Some(l) = rec.latency_ms {
                write!(w, "\t{l}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn parse_header(line: &str) -> std::result::Result<bool, String> {
    let rest = line
        .strip_prefix(&format!("#R={RUNS_PER_ARCH}\tfields="))
        .ok_or_else(|| format!("expected header `#R={RUNS_PER_ARCH}\\tfields=...`, got {line:?}"))?;
    if rest == FIELDS {
        Ok(false)
    } else if rest == format!("{FIELDS},{LATENCY_FIELD}") {
        Ok(true)
    } else {
        Err(format!("unsupported field list {rest:?}"))
    }
}

fn parse_record(line: &str, has_latency: bool) -> std::result::Result<TabularRecord, String> {
    let cols: Vec<&str> = line.split('\t').collect();
    let expected = 4 + 2 * RUNS_PER_ARCH + usize::from(has_latency);
    if cols.len() != expected {
        return Err(format!("expected {expected} fields, found {}", cols.len()));
    }
    let num = |s: &str, what: &str| {
        s.parse::<f64>()
            .map_err(|e| format!("{what} {s:?}: {e}"))
    };
    let key: ArchKey = cols[0].parse().map_err(|e: Error| e.to_string())?;
    let arch = ArchGraph::parse_ops_adj(cols[1], cols[2]).map_err(|e| e.to_string())?;
    if canonical_hash(&arch) != key {
        return Err(format!(
            "hash {key} does not match architecture (expected {})",
            canonical_hash(&arch)
        ));
    }
    let train_seconds = num(cols[3], "train_s")?;
    let mut runs = [RunRecord { val_acc: 0.0, test_acc: 0.0 }; RUNS_PER_ARCH];
    for (r, run) in runs.iter_mut().enumerate() {
        run.val_acc = num(cols[4 + 2 * r], "val")?;
        run.test_acc = num(cols[5 + 2 * r], "test")?;
    }
    let latency_ms = if has_latency {
        Some(num(cols[expected - 1], LATENCY_FIELD)?)
    } else {
        None
    };
    let rec = TabularRecord {
        arch,
        key,
        train_seconds,
        runs,
        latency_ms,
    };
    rec.validate()?;
    Ok(rec)
}

impl BenchmarkOracle for TableOracle {
    fn record(&self, arch: &ArchGraph) -> Result<TabularRecord> {
        let key = canonical_hash(arch);
        self.index
            .get(&key)
            .map(|&i| self.records[i].clone())
            .ok_or(Error::MissingArch(key))
    }

    fn latency_ms(&self, arch: &ArchGraph) -> Result<f64> {
        if !self.has_latency {
            return Err(Error::NoLatencyModel);
        }
        self.record(arch)?.latency_ms.ok_or(Error::NoLatencyModel)
    }

    fn architectures(&self) -> Option<Vec<ArchGraph>> {
        Some(self.records.iter().map(|r| r.arch.clone()).collect())
    }
}

/// Per-op cost tables of a space.
struct CostModel {
    base_latency: f64,
    edge_latency: f64,
    /// latency per op index (for nodes other than the first, in the linear space)
    latency: &'static [f64],
    first_latency: Option<&'static [f64]>,
    params: &'static [f64],
    first_params: Option<&'static [f64]>,
}

impl CostModel {
    fn for_space(space: SpaceSpec) -> Self {
        match space {
            SpaceSpec::Cell => Self {
                base_latency: 5.0,
                edge_latency: 0.1,
                latency: &[0.0, 0.6, 1.5, 0.3, 0.0],
                first_latency: None,
                params: &[0.0, 1.0, 9.0, 0.0, 0.0],
                first_params: None,
            },
            SpaceSpec::Linear => Self {
                base_latency: 9.0,
                edge_latency: 0.0,
                latency: &[2.5, 3.0, 3.6, 3.8, 4.4, 5.0, 0.0],
                first_latency: Some(&[1.0, 1.3, 1.6]),
                params: &[27.0, 75.0, 147.0, 54.0, 150.0, 294.0, 0.0],
                first_params: Some(&[9.0, 25.0, 49.0]),
            },
            SpaceSpec::Synthetic => Self {
                base_latency: 5.0,
                edge_latency: 0.0,
                latency: &[0.6, 1.5, 0.3, 0.05],
                first_latency: None,
                params: &[1.0, 9.0, 0.0, 0.0],
                first_params: None,
            },
        }
    }

    fn table<'t>(node: usize, rest: &'t [f64], first: Option<&'t [f64]>) -> &'t [f64] {
        match first {
            Some(f) if node == 0 => f,
            _ => rest,
        }
    }

    fn latency(&self, arch: &ArchGraph) -> f64 {
        let ops: f64 = arch
            .ops()
            .iter()
            .enumerate()
            .map(|(i, &op)| Self::table(i, self.latency, self.first_latency)[op])
            .sum();
        self.base_latency + ops + self.edge_latency * arch.num_edges() as f64
    }

    fn params(&self, arch: &ArchGraph) -> f64 {
        arch.ops()
            .iter()
            .enumerate()
            .map(|(i, &op)| Self::table(i, self.params, self.first_params)[op])
            .sum()
    }
}

/// Settings of the synthetic benchmark.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub space: SpaceSpec,
    /// Standard deviation (percent) of per-run accuracy noise.
    pub noise_sd: f64,
    pub seed: u64,
    /// Fraction of architectures forced into the low-accuracy band.
    pub bad_fraction: f64,
}

impl SynthConfig {
    pub fn new(space: SpaceSpec, noise_sd: f64, seed: u64) -> Self {
        Self {
            space,
            noise_sd,
            seed,
            bad_fraction: 0.2,
        }
    }
}

/// Lower and upper ends of the accuracy bands of the synthetic benchmark.
pub const SYNTH_BAD_RANGE: (f64, f64) = (10.0, 50.0);
pub const SYNTH_GOOD_RANGE: (f64, f64) = (80.0, 96.0);
/// Accuracy between the two bands, used as the classifier threshold.
pub const SYNTH_BAND_THRESHOLD: f64 = 0.5 * (SYNTH_BAD_RANGE.1 + SYNTH_GOOD_RANGE.0);

/// Coefficient scales of the op-count/depth, op-pair and global feature groups.
const QUALITY_SCALE: (f64, f64, f64) = (1.0, 0.3, 0.5);
/// Steepness of the map from standardised score to accuracy band.
const BAND_SLOPE: f64 = 1.6;

/// Reference sample size used to standardise scores in non-enumerable spaces.
const REFERENCE_SAMPLES: usize = 4096;

/// Deterministic simulated benchmark. Base accuracy is a smooth, bounded
/// function of permutation-invariant graph features (op counts, op pairs
/// along edges, depth-weighted op counts, longest path, edge density, and
/// a latency term); architectures low on a second, independent structural
/// score fall into the low band.
#[derive(Clone, Debug)]
pub struct SynthOracle {
    cfg: SynthConfig,
    vocab_size: usize,
    feat_mean: Vec<f64>,
    feat_sd: Vec<f64>,
    quality_coef: Vec<f64>,
    gate_coef: Vec<f64>,
    quality_stats: (f64, f64),
    gate_stats: (f64, f64),
    gate_cutoff: f64,
}

impl SynthOracle {
    pub fn new(cfg: SynthConfig) -> Result<Self> {
        if !(cfg.noise_sd >= 0.0 && cfg.noise_sd.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise_sd {} must be >= 0", cfg.noise_sd)));
        }
        if !(0.0..1.0).contains(&cfg.bad_fraction) {
            return Err(Error::InvalidArgument(format!(
                "bad_fraction {} outside [0, 1)",
                cfg.bad_fraction
            )));
        }
        let reference = cfg.space.enumerate().unwrap_or_else(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0x7265_66]));
            (0..REFERENCE_SAMPLES).map(|_| cfg.space.sample(&mut rng)).collect()
        });
        let vocab_size = cfg.space.vocabulary().size();
        let mut oracle = Self {
            cfg,
            vocab_size,
            feat_mean: Vec::new(),
            feat_sd: Vec::new(),
            quality_coef: Vec::new(),
            gate_coef: Vec::new(),
            quality_stats: (0.0, 1.0),
            gate_stats: (0.0, 1.0),
            gate_cutoff: f64::NEG_INFINITY,
        };
        let raw: Vec<Vec<f64>> = reference.iter().map(|a| oracle.raw_features(a)).collect();
        let dim = raw[0].len();
        for k in 0..dim {
            let col: Vec<f64> = raw.iter().map(|f| f[k]).collect();
            let (m, s) = crate::metrics::mean_sd(&col);
            oracle.feat_mean.push(m);
            oracle.feat_sd.push(if s > 1e-12 { s } else { 0.0 });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0x636f_6566]));
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
        oracle.quality_coef = draw(dim);
        oracle.gate_coef = draw(dim);
        let v = vocab_size;
        for k in 0..dim {
            let (q, g) = if k < 2 * v {
                (QUALITY_SCALE.0, 1.0)
            } else if k < 2 * v + v * v {
                (QUALITY_SCALE.1, 0.0)
            } else {
                (QUALITY_SCALE.2, 0.0)
            };
            oracle.quality_coef[k] *= q;
            oracle.gate_coef[k] *= g;
        }
        // the last feature is latency; accuracy leans towards costlier models
        oracle.quality_coef[dim - 1] = oracle.quality_coef[dim - 1].abs() + 1.0;

        let std_feats: Vec<Vec<f64>> = raw.iter().map(|f| oracle.standardize(f)).collect();
        let q: Vec<f64> = std_feats.iter().map(|f| dot(f, &oracle.quality_coef)).collect();
        let g: Vec<f64> = std_feats.iter().map(|f| dot(f, &oracle.gate_coef)).collect();
        oracle.quality_stats = nonzero_sd(crate::metrics::mean_sd(&q));
        oracle.gate_stats = nonzero_sd(crate::metrics::mean_sd(&g));
        if cfg.bad_fraction > 0.0 {
            let mut gz: Vec<f64> = g
                .iter()
                .map(|x| (x - oracle.gate_stats.0) / oracle.gate_stats.1)
                .collect();
            gz.sort_by(f64::total_cmp);
            let idx = ((cfg.bad_fraction * gz.len() as f64).round() as usize).min(gz.len() - 1);
            oracle.gate_cutoff = gz[idx];
        }
        Ok(oracle)
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    /// Accuracy threshold (percent) separating the two bands.
    pub fn band_threshold(&self) -> f64 {
        SYNTH_BAND_THRESHOLD
    }

    fn raw_features(&self, arch: &ArchGraph) -> Vec<f64> {
        let v = self.vocab_size;
        let n = arch.num_nodes();
        let mut f = vec![0.0; 2 * v + v * v + 3];
        let depths = arch.depths();
        let max_depth = depths.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
        for (i, &op) in arch.ops().iter().enumerate() {
            f[op] += 1.0;
            if let Some(d) = depths[i] {
                f[v + op] += d as f64 / max_depth;
            }
        }
        for (i, j) in arch.edges() {
            f[2 * v + arch.ops()[i] * v + arch.ops()[j]] += 1.0;
        }
        let base = 2 * v + v * v;
        f[base] = depths[n - 1].unwrap_or(0) as f64;
        let pairs = (n * (n - 1) / 2).max(1) as f64;
        f[base + 1] = arch.num_edges() as f64 / pairs;
        f[base + 2] = CostModel::for_space(self.cfg.space).latency(arch);
        f
    }

    fn standardize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.feat_mean.iter().zip(&self.feat_sd))
            .map(|(x, (m, s))| if *s > 0.0 { (x - m) / s } else { 0.0 })
            .collect()
    }

    fn scores(&self, arch: &ArchGraph) -> (f64, f64) {
        let f = self.standardize(&self.raw_features(arch));
        let q = (dot(&f, &self.quality_coef) - self.quality_stats.0) / self.quality_stats.1;
        let g = (dot(&f, &self.gate_coef) - self.gate_stats.0) / self.gate_stats.1;
        (q, g)
    }

    /// Whether the architecture falls in the low-accuracy band.
    pub fn is_bad(&self, arch: &ArchGraph) -> bool {
        self.scores(arch).1 < self.gate_cutoff
    }

    /// Noise-free accuracy in percent.
    pub fn base_accuracy(&self, arch: &ArchGraph) -> f64 {
        let (q, g) = self.scores(arch);
        let (lo, hi) = if g < self.gate_cutoff {
            SYNTH_BAD_RANGE
        } else {
            SYNTH_GOOD_RANGE
        };
        lo + (hi - lo) * sigmoid(BAND_SLOPE * q)
    }

    fn noisy(&self, base: f64, key: ArchKey, run: usize, kind: u64) -> f64 {
        if self.cfg.noise_sd == 0.0 {
            return base;
        }
        let seed = derive_seed(self.cfg.seed, &[key.0, run as u64, kind]);
        let z: f64 = ChaCha8Rng::seed_from_u64(seed).sample(StandardNormal);
        (base + self.cfg.noise_sd * z).clamp(0.01, 100.0)
    }

    /// Writes the oracle's records for `archs` as a table.
    pub fn to_table(&self, archs: &[ArchGraph]) -> Result<TableOracle> {
        let records = archs
            .iter()
            .map(|a| self.record(a))
            .collect::<Result<Vec<_>>>()?;
        TableOracle::from_records(records)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nonzero_sd((m, s): (f64, f64)) -> (f64, f64) {
    (m, if s > 1e-12 { s } else { 1.0 })
}

const KIND_VAL: u64 = 1;
const KIND_TEST: u64 = 2;

impl BenchmarkOracle for SynthOracle {
    fn record(&self, arch: &ArchGraph) -> Result<TabularRecord> {
        self.cfg.space.validate(arch)?;
        let key = canonical_hash(arch);
        let base = self.base_accuracy(arch);
        let costs = CostModel::for_space(self.cfg.space);
        let runs = std::array::from_fn(|r| RunRecord {
            val_acc: self.noisy(base, key, r, KIND_VAL),
            test_acc: self.noisy(base, key, r, KIND_TEST),
        });
        Ok(TabularRecord {
            arch: arch.clone(),
            key,
            train_seconds: 300.0 + 20.0 * costs.params(arch),
            runs,
            latency_ms: Some(costs.latency(arch)),
        })
    }

    fn latency_ms(&self, arch: &ArchGraph) -> Result<f64> {
        self.cfg.space.validate(arch)?;
        Ok(CostModel::for_space(self.cfg.space).latency(arch))
    }

    fn architectures(&self) -> Option<Vec<ArchGraph>> {
        self.cfg.space.enumerate()
    }
}

/// Inclusive latency bounds in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencyWindow {
    pub min_ms: f64,
    pub max_ms: f64,
}

impl LatencyWindow {
    pub fn contains(&self, latency: f64) -> bool {
        (self.min_ms..=self.max_ms).contains(&latency)
    }
}

/// Draws uniformly among valid architectures whose latency lies in `window`
/// (rejection sampling). Fails when `max_tries` draws all miss.
pub fn sample_in_window<R: Rng + ?Sized>(
    space: SpaceSpec,
    latency: impl Fn(&ArchGraph) -> Result<f64>,
    window: LatencyWindow,
    rng: &mut R,
    max_tries: usize,
) -> Result<ArchGraph> {
    for _ in 0..max_tries {
        let arch = space.sample(rng);
        if window.contains(latency(&arch)?) {
            return Ok(arch);
        }
    }
    Err(Error::InvalidArgument(format!(
        "latency window [{}, {}] ms is empty under the latency model ({max_tries} draws)",
        window.min_ms, window.max_ms
    )))
}
