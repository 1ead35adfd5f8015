//! Search procedures: oracle, random, regularized evolution and
//! neural-predictor search, plus Pareto selection under a latency budget.

use std::cmp::Ordering;
use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{canonical_hash, ArchGraph, ArchKey, SpaceSpec};
use crate::error::{Error, Result};
use crate::gcn::{self, FitProtocol, GcnConfig, LabeledSample, OutputHead, Prediction, Predictor};
use crate::oracle::{sample_in_window, LatencyWindow, SignalOracle, SYNTH_BAND_THRESHOLD};
use crate::seed::derive_seed;

/// Soft-Pareto look-back used for the latency-constrained search.
pub const DEFAULT_SOFT_PARETO_J: usize = 6;

/// Scale of the latency-constrained ImageNet search, for reference.
pub mod reference {
    pub const LATENCY_WINDOW_MS: (f64, f64) = (75.0, 85.0);
    pub const TRAIN_SAMPLES: usize = 119;
    pub const FINALISTS: usize = 137;
    pub const POOL_SAMPLES: usize = 112_000;
    /// Predictor quality reported on held-out ImageNet architectures.
    pub const KENDALL_TAU: f64 = 0.649;
    pub const R2: f64 = 0.648895;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    Evolution,
    Predictor,
    Oracle,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Self::Random, Self::Evolution, Self::Predictor, Self::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Evolution => "evolution",
            Self::Predictor => "predictor",
            Self::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown strategy {s:?} (random|evolution|predictor|oracle)")))
    }
}

/// Total training budget of a search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Number of trained models.
    Models(usize),
    /// Simulated training seconds.
    Seconds(f64),
}

impl Budget {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Models(0) => Err(Error::InvalidArgument("budget must be positive".into())),
            Self::Seconds(s) if !(s > 0.0 && s.is_finite()) => {
                Err(Error::InvalidArgument(format!("budget {s} s must be positive")))
            }
            _ => Ok(()),
        }
    }

    fn admits(&self, models: usize, seconds: f64, cost: f64) -> bool {
        match *self {
            Self::Models(n) => models < n,
            Self::Seconds(s) => seconds + cost <= s,
        }
    }
}

/// One trained model, in training order.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEvent {
    /// 1-based count of models trained so far.
    pub model_index: usize,
    pub cumulative_seconds: f64,
    pub arch: ArchGraph,
    pub key: ArchKey,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub events: Vec<TrajectoryEvent>,
    /// The candidate set ran out before the budget did.
    pub exhausted: bool,
}

fn better(a: &TrajectoryEvent, b: &TrajectoryEvent) -> bool {
    match a.val_acc.total_cmp(&b.val_acc) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.key < b.key,
    }
}

impl Trajectory {
    /// Highest search signal, ties broken by smaller key.
    pub fn selection(&self) -> Option<&TrajectoryEvent> {
        self.selection_index().map(|i| &self.events[i])
    }

    pub fn selection_index(&self) -> Option<usize> {
        self.running_selection().last().copied()
    }

    /// Index of the selected event after each event.
    pub fn running_selection(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.events.len());
        let mut best: Option<usize> = None;
        for (i, e) in self.events.iter().enumerate() {
            if best.is_none_or(|b| better(e, &self.events[b])) {
                best = Some(i);
            }
            out.push(best.expect("set above"));
        }
        out
    }

    pub fn total_seconds(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.cumulative_seconds)
    }
}

/// Charges trained models against the budget.
struct Recorder<'a> {
    oracle: SignalOracle<'a>,
    budget: Budget,
    traj: Trajectory,
    seconds: f64,
}

impl<'a> Recorder<'a> {
    fn new(oracle: SignalOracle<'a>, budget: Budget) -> Result<Self> {
        budget.validate()?;
        Ok(Self {
            oracle,
            budget,
            traj: Trajectory::default(),
            seconds: 0.0,
        })
    }

    fn unbounded(oracle: SignalOracle<'a>) -> Self {
        Self {
            oracle,
            budget: Budget::Seconds(f64::INFINITY),
            traj: Trajectory::default(),
            seconds: 0.0,
        }
    }

    fn models(&self) -> usize {
        self.traj.events.len()
    }

    fn can_train_more(&self) -> bool {
        match self.budget {
            Budget::Models(n) => self.models() < n,
            Budget::Seconds(s) => self.seconds < s,
        }
    }

    /// Trains `arch` if it fits; `None` means the budget is spent.
    fn train(&mut self, arch: ArchGraph) -> Result<Option<f64>> {
        let sig = self.oracle.signal(&arch)?;
        if !self.budget.admits(self.models(), self.seconds, sig.cost_seconds) {
            return Ok(None);
        }
        self.seconds += sig.cost_seconds;
        self.traj.events.push(TrajectoryEvent {
            model_index: self.models() + 1,
            cumulative_seconds: self.seconds,
            key: canonical_hash(&arch),
            arch,
            val_acc: sig.val_acc,
        });
        Ok(Some(sig.val_acc))
    }

    fn finish(mut self, exhausted: bool) -> Trajectory {
        self.traj.exhausted = exhausted;
        self.traj
    }
}

/// Uniform sampling without replacement, from a listed candidate set when
/// the oracle provides one and from the space otherwise.
pub struct DistinctSampler {
    space: SpaceSpec,
    list: Option<Vec<ArchGraph>>,
    remaining: usize,
    rng: ChaCha8Rng,
    seen: HashSet<ArchKey>,
}

impl DistinctSampler {
    pub fn new(space: SpaceSpec, list: Option<Vec<ArchGraph>>, seed: u64) -> Self {
        let remaining = list.as_ref().map_or(0, Vec::len);
        Self {
            space,
            list,
            remaining,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seen: HashSet::new(),
        }
    }

    /// Sampler over whatever the oracle lists (or the whole space).
    pub fn for_oracle(space: SpaceSpec, oracle: &SignalOracle<'_>, seed: u64) -> Self {
        Self::new(space, oracle.architectures(), seed)
    }

    pub fn exclude(&mut self, key: ArchKey) {
        self.seen.insert(key);
    }

    /// Number of keys drawn or excluded so far.
    pub fn seen(&self) -> usize {
        self.seen.len()
    }

    pub fn next_arch(&mut self) -> Option<ArchGraph> {
        match &mut self.list {
            Some(items) => {
                while self.remaining > 0 {
                    let i = self.rng.random_range(0..self.remaining);
                    self.remaining -= 1;
                    items.swap(i, self.remaining);
                    let arch = &items[self.remaining];
                    if self.seen.insert(canonical_hash(arch)) {
                        return Some(arch.clone());
                    }
                }
                None
            }
            None => {
                if self.seen.len() as u64 >= self.space.cardinality() {
                    return None;
                }
                loop {
                    let arch = self.space.sample(&mut self.rng);
                    if self.seen.insert(canonical_hash(&arch)) {
                        return Some(arch);
                    }
                }
            }
        }
    }
}

/// Trains distinct random architectures until the budget is spent.
pub fn random_search(oracle: SignalOracle<'_>, space: SpaceSpec, budget: Budget, seed: u64) -> Result<Trajectory> {
    let mut rec = Recorder::new(oracle, budget)?;
    let mut sampler = DistinctSampler::for_oracle(space, &oracle, seed);
    while rec.can_train_more() {
        let Some(arch) = sampler.next_arch() else {
            return Ok(rec.finish(true));
        };
        if rec.train(arch)?.is_none() {
            break;
        }
    }
    Ok(rec.finish(false))
}

/// Trains every architecture the oracle lists.
pub fn oracle_search(oracle: SignalOracle<'_>) -> Result<Trajectory> {
    let archs = oracle
        .architectures()
        .ok_or_else(|| Error::Unsupported("oracle search needs an enumerable benchmark".into()))?;
    let mut rec = Recorder::unbounded(oracle);
    for arch in archs {
        rec.train(arch)?;
    }
    Ok(rec.finish(false))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub sample_size: usize,
    pub p_edge_mutate: f64,
    pub p_node_mutate: f64,
    /// Treat a child identical to its parent like an invalid one and mutate again.
    pub require_change: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            sample_size: 10,
            p_edge_mutate: 1.0 / 14.0,
            p_node_mutate: 1.0 / 10.0,
            require_change: false,
        }
    }
}

impl EvolutionConfig {
    /// Reference settings; in the 5-node synthetic space unchanged children
    /// are redrawn, since most children would otherwise copy their parent.
    pub fn for_space(space: SpaceSpec) -> Self {
        Self {
            require_change: space == SpaceSpec::Synthetic,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 || self.sample_size == 0 {
            return Err(Error::Config("population_size and sample_size must be >= 1".into()));
        }
        if self.sample_size > self.population_size {
            return Err(Error::Config(format!(
                "sample_size {} exceeds population_size {}",
                self.sample_size, self.population_size
            )));
        }
        for p in [self.p_edge_mutate, self.p_node_mutate] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("mutation probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Bernoulli trial counts over every mutation attempt, including rejected ones.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MutationStats {
    pub attempts: usize,
    pub edge_trials: usize,
    pub edge_flips: usize,
    pub node_trials: usize,
    pub node_changes: usize,
}

/// Flips each upper-triangular edge slot and resamples each mutable op to a
/// different allowed op, repeating until the child is valid.
pub fn mutate<R: Rng + ?Sized>(
    parent: &ArchGraph,
    space: SpaceSpec,
    cfg: &EvolutionConfig,
    rng: &mut R,
    stats: &mut MutationStats,
) -> ArchGraph {
    let n = parent.num_nodes();
    loop {
        stats.attempts += 1;
        let mut child = parent.clone();
        if space.has_free_edges() {
            for i in 0..n {
                for j in i + 1..n {
                    stats.edge_trials += 1;
                    if rng.random_bool(cfg.p_edge_mutate) {
                        stats.edge_flips += 1;
                        child.flip_edge(i, j);
                    }
                }
            }
        }
        for node in space.mutable_nodes(n) {
            let allowed = space.allowed_ops(n, node);
            stats.node_trials += 1;
            if rng.random_bool(cfg.p_node_mutate) && allowed.len() > 1 {
                stats.node_changes += 1;
                let current = child.ops()[node];
                // uniform over the other allowed ops
                let mut op = rng.random_range(allowed.start..allowed.end - 1);
                if op >= current {
                    op += 1;
                }
                child.set_op(node, op);
            }
        }
        if space.is_valid(&child) && !(cfg.require_change && child == *parent) {
            return child;
        }
    }
}

/// Per-step record of the aging population.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvolutionLog {
    /// Birth indices of the population after each trained model.
    pub populations: Vec<Vec<usize>>,
    /// Birth index removed at each step (None during warm-up).
    pub removed: Vec<Option<usize>>,
    pub mutation: MutationStats,
}

struct Member {
    birth: usize,
    key: ArchKey,
    val: f64,
    arch: ArchGraph,
}

/// Aging evolution. The initial population is drawn like [`random_search`]
/// with the same seed; later models may repeat earlier ones.
pub fn regularized_evolution(
    oracle: SignalOracle<'_>,
    space: SpaceSpec,
    budget: Budget,
    cfg: &EvolutionConfig,
    seed: u64,
) -> Result<Trajectory> {
    regularized_evolution_logged(oracle, space, budget, cfg, seed, false).map(|(t, _)| t)
}

pub fn regularized_evolution_logged(
    oracle: SignalOracle<'_>,
    space: SpaceSpec,
    budget: Budget,
    cfg: &EvolutionConfig,
    seed: u64,
    keep_log: bool,
) -> Result<(Trajectory, EvolutionLog)> {
    cfg.validate()?;
    let mut rec = Recorder::new(oracle, budget)?;
    let mut sampler = DistinctSampler::for_oracle(space, &oracle, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xe70]));
    let mut log = EvolutionLog::default();
    let mut population: VecDeque<Member> = VecDeque::with_capacity(cfg.population_size + 1);
    let mut exhausted = false;

    let note = |pop: &VecDeque<Member>, removed: Option<usize>, log: &mut EvolutionLog| {
        if keep_log {
            log.populations.push(pop.iter().map(|m| m.birth).collect());
            log.removed.push(removed);
        }
    };

    while population.len() < cfg.population_size && rec.can_train_more() {
        let Some(arch) = sampler.next_arch() else {
            exhausted = true;
            break;
        };
        let key = canonical_hash(&arch);
        let Some(val) = rec.train(arch.clone())? else { break };
        population.push_back(Member { birth: rec.models() - 1, key, val, arch });
        note(&population, None, &mut log);
    }

    if population.len() == cfg.population_size {
        while rec.can_train_more() {
            let picks = index::sample(&mut rng, population.len(), cfg.sample_size);
            let parent = picks
                .iter()
                .map(|i| &population[i])
                .max_by(|a, b| a.val.total_cmp(&b.val).then(b.key.cmp(&a.key)))
                .expect("sample_size >= 1");
            let child = mutate(&parent.arch, space, cfg, &mut rng, &mut log.mutation);
            let key = canonical_hash(&child);
            let Some(val) = rec.train(child.clone())? else { break };
            population.push_back(Member { birth: rec.models() - 1, key, val, arch: child });
            let oldest = population.pop_front().expect("population is full");
            note(&population, Some(oldest.birth), &mut log);
        }
    }
    Ok((rec.finish(exhausted), log))
}

/// Settings of the neural-predictor search beyond the budget.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorSearchConfig {
    /// Models trained to fit the predictor (N).
    pub n_train: usize,
    /// Candidates scored by the predictor (M); the remaining budget is K.
    pub pool_size: usize,
    pub grid: Vec<GcnConfig>,
    pub protocol: FitProtocol,
    /// Classifier config for the cascade; `None` trains a single regressor.
    pub classifier: Option<GcnConfig>,
}

impl PredictorSearchConfig {
    /// Reference cascade for the cell space with the N=172 predictor size.
    pub fn cell_default() -> Self {
        Self {
            n_train: 172,
            pool_size: 10_000,
            grid: vec![GcnConfig {
                node_dim: GcnConfig::node_dim_for_samples(172),
                ..GcnConfig::nasbench_regressor()
            }],
            protocol: FitProtocol::default(),
            classifier: Some(GcnConfig {
                node_dim: GcnConfig::node_dim_for_samples(172),
                ..GcnConfig::nasbench_classifier()
            }),
        }
    }

    pub fn linear_default() -> Self {
        Self {
            n_train: reference::TRAIN_SAMPLES,
            pool_size: 10_000,
            grid: vec![GcnConfig::mobile_regressor()],
            protocol: FitProtocol::default(),
            classifier: None,
        }
    }

    /// Small cascade for the synthetic space, thresholded between its accuracy bands.
    pub fn synthetic_default() -> Self {
        Self {
            n_train: 50,
            pool_size: 10_000,
            grid: vec![GcnConfig::desk_regressor()],
            protocol: FitProtocol::default(),
            classifier: Some(GcnConfig {
                output_head: OutputHead::Classification,
                class_threshold: SYNTH_BAND_THRESHOLD,
                ..GcnConfig::desk_regressor()
            }),
        }
    }

    pub fn default_for(space: SpaceSpec) -> Self {
        match space {
            SpaceSpec::Cell => Self::cell_default(),
            SpaceSpec::Linear => Self::linear_default(),
            SpaceSpec::Synthetic => Self::synthetic_default(),
        }
    }
}

/// Fits the predictor (or cascade) on labelled samples.
pub fn fit_predictor(
    data: &[LabeledSample],
    space: SpaceSpec,
    cfg: &PredictorSearchConfig,
    seed: u64,
) -> Result<Predictor> {
    let vocab = space.vocabulary();
    let reg_seed = derive_seed(seed, &[0x7265_67]);
    match &cfg.classifier {
        None => gcn::fit_with_protocol(data, &cfg.grid, &vocab, &cfg.protocol, reg_seed).map(Predictor::Single),
        Some(cls) => {
            if cls.output_head != OutputHead::Classification {
                return Err(Error::Config("classifier config needs a classification head".into()));
            }
            let classifier = gcn::train(cls, &vocab, data, derive_seed(seed, &[0x636c_73]))?;
            let good: Vec<LabeledSample> = data
                .iter()
                .filter(|s| s.accuracy > cls.class_threshold)
                .cloned()
                .collect();
            let reg_data = if good.len() >= 3 { &good[..] } else { data };
            let regressor = gcn::fit_with_protocol(reg_data, &cfg.grid, &vocab, &cfg.protocol, reg_seed)?;
            Ok(Predictor::TwoStage { classifier, regressor })
        }
    }
}

/// Scores `pool` and returns indices ordered best first (ties by key).
pub fn rank_candidates(predictor: &Predictor, pool: &[ArchGraph]) -> Result<Vec<usize>> {
    let scored: Vec<(f64, ArchKey)> = pool
        .par_iter()
        .map(|a| Ok((predictor.predict(a)?.rank_value(), canonical_hash(a))))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&i, &j| {
        scored[j]
            .0
            .total_cmp(&scored[i].0)
            .then(scored[i].1.cmp(&scored[j].1))
    });
    Ok(order)
}

/// Outcome of a neural-predictor search, with the fitted predictor.
pub struct PredictorSearchOutcome {
    pub trajectory: Trajectory,
    pub predictor: Option<Predictor>,
}

/// Trains N random models, fits a predictor, ranks M fresh candidates and
/// trains them best-first with the rest of the budget.
pub fn neural_predictor_search(
    oracle: SignalOracle<'_>,
    space: SpaceSpec,
    budget: Budget,
    cfg: &PredictorSearchConfig,
    seed: u64,
) -> Result<PredictorSearchOutcome> {
    if cfg.n_train < 3 {
        return Err(Error::InvalidArgument(format!("N = {} must be >= 3", cfg.n_train)));
    }
    if let Budget::Models(total) = budget {
        if total <= cfg.n_train {
            return Err(Error::InvalidArgument(format!(
                "budget {total} leaves no models for validation after N = {}",
                cfg.n_train
            )));
        }
        if cfg.pool_size < total - cfg.n_train {
            return Err(Error::InvalidArgument(format!(
                "pool size {} is smaller than K = {}",
                cfg.pool_size,
                total - cfg.n_train
            )));
        }
    }
    let mut rec = Recorder::new(oracle, budget)?;
    let mut sampler = DistinctSampler::for_oracle(space, &oracle, seed);
    let mut data = Vec::with_capacity(cfg.n_train);
    while data.len() < cfg.n_train {
        let Some(arch) = sampler.next_arch() else {
            return Ok(PredictorSearchOutcome { trajectory: rec.finish(true), predictor: None });
        };
        let Some(val) = rec.train(arch.clone())? else {
            return Ok(PredictorSearchOutcome { trajectory: rec.finish(false), predictor: None });
        };
        data.push(LabeledSample::new(arch, val)?);
    }
    let predictor = fit_predictor(&data, space, cfg, seed)?;

    let mut pool = Vec::with_capacity(cfg.pool_size.min(4096));
    while pool.len() < cfg.pool_size {
        match sampler.next_arch() {
            Some(a) => pool.push(a),
            None => break,
        }
    }
    let order = rank_candidates(&predictor, &pool)?;
    let mut consumed = 0;
    for &i in &order {
        if !rec.can_train_more() {
            break;
        }
        if rec.train(pool[i].clone())?.is_none() {
            break;
        }
        consumed += 1;
    }
    let exhausted = consumed == pool.len() && rec.can_train_more();
    Ok(PredictorSearchOutcome {
        trajectory: rec.finish(exhausted),
        predictor: Some(predictor),
    })
}

/// A (latency, accuracy) pair tagged with its architecture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub latency_ms: f64,
    pub accuracy: f64,
    pub key: ArchKey,
}

fn latency_order(a: &ParetoPoint, b: &ParetoPoint) -> Ordering {
    a.latency_ms.total_cmp(&b.latency_ms).then(a.key.cmp(&b.key))
}

/// Which earlier candidates the soft-Pareto rule compares against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftParetoWindow {
    /// The J candidates immediately before, kept or not.
    #[default]
    PrecedingCandidates,
    /// The J most recently kept candidates.
    PrecedingKept,
}

/// Keeps a candidate if it is among the first J by latency or its accuracy
/// beats the minimum of the J candidates before it. Output is in latency order.
pub fn soft_pareto_filter(points: &[ParetoPoint], j: usize, window: SoftParetoWindow) -> Result<Vec<ParetoPoint>> {
    if j < 1 {
        return Err(Error::InvalidArgument("J must be >= 1".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(latency_order);
    let mut kept: Vec<ParetoPoint> = Vec::new();
    for (i, p) in sorted.iter().enumerate() {
        let keep = match window {
            SoftParetoWindow::PrecedingCandidates => {
                i < j || p.accuracy > sorted[i - j..i].iter().map(|q| q.accuracy).fold(f64::INFINITY, f64::min)
            }
            SoftParetoWindow::PrecedingKept => {
                kept.len() < j
                    || p.accuracy
                        > kept[kept.len() - j..].iter().map(|q| q.accuracy).fold(f64::INFINITY, f64::min)
            }
        };
        if keep {
            kept.push(*p);
        }
    }
    Ok(kept)
}

/// Points for which no faster point is more accurate (and no equally fast
/// point is more accurate). Output is in latency order.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut sorted = points.to_vec();
    sorted.sort_by(latency_order);
    let mut out = Vec::new();
    let mut best_faster = f64::NEG_INFINITY;
    let mut start = 0;
    while start < sorted.len() {
        let lat = sorted[start].latency_ms;
        let end = start + sorted[start..].iter().take_while(|p| p.latency_ms == lat).count();
        let group = &sorted[start..end];
        let group_max = group.iter().map(|p| p.accuracy).fold(f64::NEG_INFINITY, f64::max);
        out.extend(
            group
                .iter()
                .filter(|p| p.accuracy == group_max && p.accuracy >= best_faster),
        );
        best_faster = best_faster.max(group_max);
        start = end;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatencySearchConfig {
    pub window: LatencyWindow,
    pub n_train: usize,
    pub pool_size: usize,
    pub j: usize,
    pub soft_pareto_window: SoftParetoWindow,
    pub grid: Vec<GcnConfig>,
    pub protocol: FitProtocol,
    /// Rejection-sampling attempts per drawn architecture.
    pub max_tries: usize,
}

impl LatencySearchConfig {
    pub fn new(window: LatencyWindow, n_train: usize, pool_size: usize, grid: Vec<GcnConfig>) -> Self {
        Self {
            window,
            n_train,
            pool_size,
            j: DEFAULT_SOFT_PARETO_J,
            soft_pareto_window: SoftParetoWindow::default(),
            grid,
            protocol: FitProtocol::default(),
            max_tries: 100_000,
        }
    }
}

pub struct LatencySearchOutcome {
    pub trajectory: Trajectory,
    /// Predicted points kept by the soft-Pareto filter.
    pub finalists: Vec<ParetoPoint>,
    /// Measured frontier over the finalists.
    pub frontier: Vec<ParetoPoint>,
}

fn distinct_in_window(
    space: SpaceSpec,
    oracle: &SignalOracle<'_>,
    window: LatencyWindow,
    rng: &mut ChaCha8Rng,
    seen: &mut HashSet<ArchKey>,
    max_tries: usize,
) -> Result<ArchGraph> {
    for _ in 0..max_tries {
        let arch = sample_in_window(space, |a| oracle.latency(a), window, rng, max_tries)?;
        if seen.insert(canonical_hash(&arch)) {
            return Ok(arch);
        }
    }
    Err(Error::InvalidArgument("latency window has too few distinct architectures".into()))
}

/// Trains a single-stage predictor on N in-window models, predicts a pool of
/// M in-window candidates, trains the soft-Pareto finalists and returns the
/// measured frontier.
pub fn latency_constrained_search(
    oracle: SignalOracle<'_>,
    space: SpaceSpec,
    cfg: &LatencySearchConfig,
    seed: u64,
) -> Result<LatencySearchOutcome> {
    if cfg.n_train < 3 {
        return Err(Error::InvalidArgument(format!("N = {} must be >= 3", cfg.n_train)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut rec = Recorder::unbounded(oracle);
    let mut data = Vec::with_capacity(cfg.n_train);
    for _ in 0..cfg.n_train {
        let arch = distinct_in_window(space, &oracle, cfg.window, &mut rng, &mut seen, cfg.max_tries)?;
        let val = rec.train(arch.clone())?.expect("unbounded budget");
        data.push(LabeledSample::new(arch, val)?);
    }
    let search_cfg = PredictorSearchConfig {
        n_train: cfg.n_train,
        pool_size: cfg.pool_size,
        grid: cfg.grid.clone(),
        protocol: cfg.protocol.clone(),
        classifier: None,
    };
    let predictor = fit_predictor(&data, space, &search_cfg, seed)?;
    let pool = (0..cfg.pool_size)
        .map(|_| distinct_in_window(space, &oracle, cfg.window, &mut rng, &mut seen, cfg.max_tries))
        .collect::<Result<Vec<_>>>()?;
    let predicted = pool
        .par_iter()
        .map(|a| {
            Ok(ParetoPoint {
                latency_ms: oracle.latency(a)?,
                accuracy: match predictor.predict(a)? {
                    Prediction::Accepted(v) => v,
                    Prediction::Rejected => f64::NEG_INFINITY,
                },
                key: canonical_hash(a),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let finalists = soft_pareto_filter(&predicted, cfg.j, cfg.soft_pareto_window)?;
    let by_key: std::collections::HashMap<ArchKey, &ArchGraph> =
        pool.iter().map(|a| (canonical_hash(a), a)).collect();
    let mut measured = Vec::with_capacity(finalists.len());
    for f in &finalists {
        let arch = by_key[&f.key].clone();
        let val = rec.train(arch)?.expect("unbounded budget");
        measured.push(ParetoPoint { accuracy: val, ..*f });
    }
    Ok(LatencySearchOutcome {
        trajectory: rec.finish(false),
        frontier: pareto_frontier(&measured),
        finalists,
    })
}
