//! Search spaces, architecture DAGs and their encodings.
//!
//! Three spaces are supported:
//!
//! * `cell`: NASBench-101 style cells of 2..=7 nodes, `input` first and
//!   `output` last, interior nodes one of `conv1x1`, `conv3x3`, `max-pool`,
//!   at most 9 edges, every interior node on an input→output path.
//! * `linear`: a 22-layer chain of mobile inverted-bottleneck choices.
//! * `synthetic`: 5 nodes on a fixed chain-plus-skip topology with 4 ops per
//!   node (1024 architectures), small enough to enumerate.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Number of unique models reported for the NASBench-101 cell space.
pub const NASBENCH_UNIQUE_MODELS: u64 = 423_624;
/// Largest cell, in nodes.
pub const CELL_MAX_NODES: usize = 7;
/// Edge limit for cells.
pub const CELL_MAX_EDGES: usize = 9;
/// Layers in the linear (mobile) space.
pub const LINEAR_LAYERS: usize = 22;
/// Layers that open a block after the stem; the zero op is forbidden there.
pub const LINEAR_BLOCK_FIRST: [usize; 6] = [1, 5, 9, 13, 17, 21];
/// Nodes in the synthetic space.
pub const SYNTHETIC_NODES: usize = 5;
/// Fixed synthetic topology: a chain with two skips.
pub const SYNTHETIC_EDGES: [(usize, usize); 6] = [(0, 1), (1, 2), (2, 3), (3, 4), (0, 2), (2, 4)];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpVocabulary {
    names: Vec<String>,
}

impl OpVocabulary {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::InvalidArgument("empty op vocabulary".into()));
        }
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::InvalidArgument("duplicate op names in vocabulary".into()));
        }
        Ok(Self { names })
    }

    pub fn cell() -> Self {
        Self::from_static(&["input", "conv1x1", "conv3x3", "max-pool", "output"])
    }

    /// Inverted-bottleneck kernel/expansion variants plus `zero`. In the
    /// first layer indices 0..3 denote the expansion-1 kernels 3/5/7.
    pub fn linear() -> Self {
        Self::from_static(&[
            "ib3x3-3", "ib5x5-3", "ib7x7-3", "ib3x3-6", "ib5x5-6", "ib7x7-6", "zero",
        ])
    }

    pub fn synthetic() -> Self {
        Self::from_static(&["conv1x1", "conv3x3", "max-pool", "skip"])
    }

    fn from_static(names: &[&str]) -> Self {
        Self {
            names: names.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Stable 64-bit digest of an architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ArchKey(pub u64);

impl fmt::Display for ArchKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for ArchKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != 16 {
            return Err(Error::Parse(format!("arch key {s:?} is not 16 hex digits")));
        }
        u64::from_str_radix(s, 16)
            .map(ArchKey)
            .map_err(|e| Error::Parse(format!("arch key {s:?}: {e}")))
    }
}

impl From<ArchKey> for String {
    fn from(k: ArchKey) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for ArchKey {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// A labelled DAG: `ops[i]` is the op of node `i`, `edge(i, j)` an edge `i → j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ArchGraph {
    ops: Vec<usize>,
    adj: Vec<bool>,
}

impl ArchGraph {
    /// Builds a graph, checking that it is a DAG in topological order
    /// (strictly upper-triangular adjacency).
    pub fn new(ops: Vec<usize>, adj: Vec<bool>) -> Result<Self> {
        let n = ops.len();
        if n == 0 {
            return Err(Error::InvalidArch("no nodes".into()));
        }
        if adj.len() != n * n {
            return Err(Error::InvalidArch(format!(
                "adjacency has {} entries, expected {}",
                adj.len(),
                n * n
            )));
        }
        for i in 0..n {
            for j in 0..=i {
                if adj[i * n + j] {
                    return Err(Error::InvalidArch(format!(
                        "edge {i}->{j} is not strictly upper-triangular"
                    )));
                }
            }
        }
        Ok(Self { ops, adj })
    }

    pub fn from_edges(ops: Vec<usize>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = ops.len();
        let mut adj = vec![false; n * n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidArch(format!("edge {i}->{j} out of range")));
            }
            adj[i * n + j] = true;
        }
        Self::new(ops, adj)
    }

    pub fn chain(ops: Vec<usize>) -> Self {
        let n = ops.len();
        let mut adj = vec![false; n * n];
        for i in 1..n {
            adj[(i - 1) * n + i] = true;
        }
        Self { ops, adj }
    }

    pub fn num_nodes(&self) -> usize {
        self.ops.len()
    }

    pub fn ops(&self) -> &[usize] {
        &self.ops
    }

    pub fn edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.num_nodes() + j]
    }

    pub fn adjacency(&self) -> &[bool] {
        &self.adj
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().filter(|&&e| e).count()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.num_nodes();
        (0..n).flat_map(move |i| ((i + 1)..n).filter(move |&j| self.edge(i, j)).map(move |j| (i, j)))
    }

    pub(crate) fn set_op(&mut self, node: usize, op: usize) {
        self.ops[node] = op;
    }

    pub(crate) fn flip_edge(&mut self, i: usize, j: usize) {
        debug_assert!(i < j);
        let n = self.num_nodes();
        self.adj[i * n + j] = !self.adj[i * n + j];
    }

    /// Kahn's algorithm over the adjacency as given (no ordering assumed).
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.num_nodes();
        let mut indeg = vec![0usize; n];
        for (_, j) in self.edges() {
            indeg[j] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop() {
            order.push(i);
            for j in 0..n {
                if self.adj[i * n + j] {
                    indeg[j] -= 1;
                    if indeg[j] == 0 {
                        ready.push(j);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Longest path length (in edges) from node 0 to each node; `None` if unreachable.
    pub fn depths(&self) -> Vec<Option<usize>> {
        let n = self.num_nodes();
        let mut depth = vec![None; n];
        depth[0] = Some(0);
        for j in 1..n {
            depth[j] = (0..j)
                .filter(|&i| self.edge(i, j))
                .filter_map(|i| depth[i].map(|d| d + 1))
                .max();
        }
        depth
    }

    /// Applies a node permutation: node `i` moves to position `perm[i]`.
    /// The result need not be upper-triangular, so it is returned as raw parts.
    pub fn permuted_parts(&self, perm: &[usize]) -> (Vec<usize>, Vec<bool>) {
        let n = self.num_nodes();
        let mut ops = vec![0; n];
        let mut adj = vec![false; n * n];
        for i in 0..n {
            ops[perm[i]] = self.ops[i];
            for j in 0..n {
                if self.edge(i, j) {
                    adj[perm[i] * n + perm[j]] = true;
                }
            }
        }
        (ops, adj)
    }

    /// Adjacency as a row-major `0`/`1` string.
    pub fn adjacency_bits(&self) -> String {
        self.adj.iter().map(|&e| if e { '1' } else { '0' }).collect()
    }

    pub fn ops_csv(&self) -> String {
        self.ops
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_ops_adj(ops: &str, adj: &str) -> Result<Self> {
        let ops: Vec<usize> = ops
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("op index {s:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        let adj: Vec<bool> = adj
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!("adjacency bit {other:?}"))),
            })
            .collect::<Result<_>>()?;
        Self::new(ops, adj)
    }

    /// Parses a parenthesised tuple of layer op indices into a linear-space chain.
    pub fn parse_linear_tuple(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| Error::Parse(format!("expected parenthesised tuple, got {s:?}")))?;
        let ops: Vec<usize> = inner
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("layer index {t:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        let arch = Self::chain(ops);
        SpaceSpec::Linear.validate(&arch)?;
        Ok(arch)
    }
}

/// `ops=<comma-separated indices>;adj=<row-major bits>`
impl fmt::Display for ArchGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ops={};adj={}", self.ops_csv(), self.adjacency_bits())
    }
}

impl FromStr for ArchGraph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (ops, adj) = s
            .trim()
            .split_once(';')
            .ok_or_else(|| Error::Parse(format!("missing ';' in {s:?}")))?;
        let ops = ops
            .strip_prefix("ops=")
            .ok_or_else(|| Error::Parse(format!("missing 'ops=' in {s:?}")))?;
        let adj = adj
            .strip_prefix("adj=")
            .ok_or_else(|| Error::Parse(format!("missing 'adj=' in {s:?}")))?;
        Self::parse_ops_adj(ops, adj)
    }
}

/// Deterministic digest of (ops, adjacency).
pub fn canonical_hash(arch: &ArchGraph) -> ArchKey {
    let mut h = Sha256::new();
    h.update((arch.num_nodes() as u32).to_le_bytes());
    for &op in &arch.ops {
        h.update((op as u32).to_le_bytes());
    }
    let bits: Vec<u8> = arch.adj.iter().map(|&e| e as u8).collect();
    h.update(&bits);
    let digest = h.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    ArchKey(u64::from_be_bytes(word))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceSpec {
    Cell,
    Linear,
    Synthetic,
}

impl FromStr for SpaceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cell" => Ok(Self::Cell),
            "linear" => Ok(Self::Linear),
            "synthetic" => Ok(Self::Synthetic),
            other => Err(Error::Parse(format!(
                "unknown space {other:?} (expected cell, linear or synthetic)"
            ))),
        }
    }
}

impl fmt::Display for SpaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cell => "cell",
            Self::Linear => "linear",
            Self::Synthetic => "synthetic",
        })
    }
}

impl SpaceSpec {
    pub fn vocabulary(&self) -> OpVocabulary {
        match self {
            Self::Cell => OpVocabulary::cell(),
            Self::Linear => OpVocabulary::linear(),
            Self::Synthetic => OpVocabulary::synthetic(),
        }
    }

    pub fn max_nodes(&self) -> usize {
        match self {
            Self::Cell => CELL_MAX_NODES,
            Self::Linear => LINEAR_LAYERS,
            Self::Synthetic => SYNTHETIC_NODES,
        }
    }

    /// Ops permitted at `node` of a graph with `num_nodes` nodes.
    pub fn allowed_ops(&self, num_nodes: usize, node: usize) -> std::ops::Range<usize> {
        match self {
            Self::Cell if node == 0 => 0..1,
            Self::Cell if node + 1 == num_nodes => 4..5,
            Self::Cell => 1..4,
            Self::Linear if node == 0 => 0..3,
            Self::Linear if LINEAR_BLOCK_FIRST.contains(&node) => 0..6,
            Self::Linear => 0..7,
            Self::Synthetic => 0..4,
        }
    }

    /// Whether edges are part of the search (only cells have free topology).
    pub fn has_free_edges(&self) -> bool {
        matches!(self, Self::Cell)
    }

    /// Nodes whose op may be mutated.
    pub fn mutable_nodes(&self, num_nodes: usize) -> std::ops::Range<usize> {
        match self {
            Self::Cell => 1..num_nodes.saturating_sub(1),
            Self::Linear | Self::Synthetic => 0..num_nodes,
        }
    }

    pub fn validate(&self, arch: &ArchGraph) -> Result<()> {
        let n = arch.num_nodes();
        for (i, &op) in arch.ops.iter().enumerate() {
            if !self.allowed_ops(n, i).contains(&op) {
                return Err(Error::InvalidArch(format!(
                    "op {op} not allowed at node {i} in {self} space"
                )));
            }
        }
        match self {
            Self::Cell => {
                if !(2..=CELL_MAX_NODES).contains(&n) {
                    return Err(Error::InvalidArch(format!("cell with {n} nodes")));
                }
                if arch.num_edges() > CELL_MAX_EDGES {
                    return Err(Error::InvalidArch(format!(
                        "{} edges exceeds {CELL_MAX_EDGES}",
                        arch.num_edges()
                    )));
                }
                if !cell_mask_connected(n, adjacency_mask(arch)) {
                    return Err(Error::InvalidArch(
                        "some node is not on an input→output path".into(),
                    ));
                }
            }
            Self::Linear => {
                if n != LINEAR_LAYERS || *arch != ArchGraph::chain(arch.ops.clone()) {
                    return Err(Error::InvalidArch(format!(
                        "linear archs are {LINEAR_LAYERS}-layer chains"
                    )));
                }
            }
            Self::Synthetic => {
                let fixed = ArchGraph::from_edges(arch.ops.clone(), &SYNTHETIC_EDGES)?;
                if n != SYNTHETIC_NODES || *arch != fixed {
                    return Err(Error::InvalidArch("synthetic topology is fixed".into()));
                }
            }
        }
        Ok(())
    }

    pub fn is_valid(&self, arch: &ArchGraph) -> bool {
        self.validate(arch).is_ok()
    }

    /// Uniformly samples a valid architecture.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ArchGraph {
        match self {
            Self::Cell => sample_cell(rng),
            Self::Linear => {
                let ops = (0..LINEAR_LAYERS)
                    .map(|i| rng.random_range(self.allowed_ops(LINEAR_LAYERS, i)))
                    .collect();
                ArchGraph::chain(ops)
            }
            Self::Synthetic => {
                let ops = (0..SYNTHETIC_NODES).map(|_| rng.random_range(0..4)).collect();
                synthetic_arch(ops)
            }
        }
    }

    /// Exact size of the space, where a closed form exists.
    pub fn cardinality(&self) -> u64 {
        match self {
            Self::Cell => NASBENCH_UNIQUE_MODELS,
            Self::Linear => (0..LINEAR_LAYERS)
                .map(|i| self.allowed_ops(LINEAR_LAYERS, i).len() as u64)
                .product(),
            Self::Synthetic => (0..SYNTHETIC_NODES)
                .map(|i| self.allowed_ops(SYNTHETIC_NODES, i).len() as u64)
                .product(),
        }
    }

    /// All architectures, for spaces small enough to list.
    pub fn enumerate(&self) -> Option<Vec<ArchGraph>> {
        match self {
            Self::Synthetic => {
                let total = self.cardinality() as usize;
                Some(
                    (0..total)
                        .map(|mut code| {
                            let ops = (0..SYNTHETIC_NODES)
                                .map(|_| {
                                    let op = code % 4;
                                    code /= 4;
                                    op
                                })
                                .collect();
                            synthetic_arch(ops)
                        })
                        .collect(),
                )
            }
            _ => None,
        }
    }
}

fn synthetic_arch(ops: Vec<usize>) -> ArchGraph {
    ArchGraph::from_edges(ops, &SYNTHETIC_EDGES).expect("fixed synthetic topology is a DAG")
}

/// Upper-triangle bits, pair `(i, j)` with `i < j` at bit position `pair_index(n, i, j)`.
fn adjacency_mask(arch: &ArchGraph) -> u32 {
    let n = arch.num_nodes();
    let mut mask = 0u32;
    let mut bit = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if arch.edge(i, j) {
                mask |= 1 << bit;
            }
            bit += 1;
        }
    }
    mask
}

/// Every node reachable from 0 and reaching `n - 1`.
fn cell_mask_connected(n: usize, mask: u32) -> bool {
    let mut succ = [0u8; CELL_MAX_NODES];
    let mut bit = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if mask & (1 << bit) != 0 {
                succ[i] |= 1 << j;
            }
            bit += 1;
        }
    }
    let mut from_input = 1u8;
    for i in 0..n {
        if from_input & (1 << i) != 0 {
            from_input |= succ[i];
        }
    }
    let mut to_output = 1u8 << (n - 1);
    for i in (0..n).rev() {
        if succ[i] & to_output != 0 {
            to_output |= 1 << i;
        }
    }
    let all = ((1u16 << n) - 1) as u8;
    from_input & to_output == all
}

/// Number of valid adjacency matrices for each cell size (index = node count).
fn cell_valid_matrix_counts() -> &'static [u64; CELL_MAX_NODES + 1] {
    static COUNTS: OnceLock<[u64; CELL_MAX_NODES + 1]> = OnceLock::new();
    COUNTS.get_or_init(|| {
        let mut counts = [0u64; CELL_MAX_NODES + 1];
        for (n, count) in counts.iter_mut().enumerate().skip(2) {
            let pairs = n * (n - 1) / 2;
            *count = (0u32..(1 << pairs))
                .filter(|m| m.count_ones() as usize <= CELL_MAX_EDGES && cell_mask_connected(n, *m))
                .count() as u64;
        }
        counts
    })
}

/// Sizes are drawn in proportion to their number of labelled valid cells, then
/// the adjacency is rejection-sampled, giving a uniform draw over all valid cells.
fn sample_cell<R: Rng + ?Sized>(rng: &mut R) -> ArchGraph {
    let counts = cell_valid_matrix_counts();
    let weights: Vec<u64> = (0..=CELL_MAX_NODES)
        .map(|n| if n < 2 { 0 } else { counts[n] * 3u64.pow(n as u32 - 2) })
        .collect();
    let total: u64 = weights.iter().sum();
    let mut pick = rng.random_range(0..total);
    let mut n = 2;
    for (size, &w) in weights.iter().enumerate() {
        if pick < w {
            n = size;
            break;
        }
        pick -= w;
    }
    let pairs = n * (n - 1) / 2;
    let mask = loop {
        let m: u32 = rng.random_range(0..(1u32 << pairs));
        if m.count_ones() as usize <= CELL_MAX_EDGES && cell_mask_connected(n, m) {
            break m;
        }
    };
    let mut adj = vec![false; n * n];
    let mut bit = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            adj[i * n + j] = mask & (1 << bit) != 0;
            bit += 1;
        }
    }
    let mut ops = vec![0; n];
    ops[n - 1] = 4;
    for op in ops.iter_mut().take(n - 1).skip(1) {
        *op = rng.random_range(1..4);
    }
    ArchGraph { ops, adj }
}

/// Degree normalisation applied to `A + I`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjNormalization {
    /// `D⁻¹(A + I)`: mean over neighbours and self.
    #[default]
    Row,
    /// `D^{-1/2}(A + I)D^{-1/2}` with row degrees.
    Symmetric,
}

/// One-hot features and both propagation matrices of a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedGraph {
    pub features: Tensor2,
    /// Row `i` averages node `i` with its predecessors (information follows edges).
    pub fwd_adj: Tensor2,
    /// Row `i` averages node `i` with its successors.
    pub bwd_adj: Tensor2,
}

impl EncodedGraph {
    pub fn new(arch: &ArchGraph, vocab: &OpVocabulary, norm: AdjNormalization) -> Result<Self> {
        let features = encode_onehot(arch, vocab)?;
        let (fwd_adj, bwd_adj) = build_normalized_adjacency_with(arch, norm);
        Ok(Self {
            features,
            fwd_adj,
            bwd_adj,
        })
    }

    /// Encodes ops plus a row-major adjacency in any node labeling, such as
    /// the output of [`ArchGraph::permuted_parts`].
    pub fn from_parts(ops: &[usize], adj: &[bool], vocab: &OpVocabulary, norm: AdjNormalization) -> Result<Self> {
        let n = ops.len();
        if adj.len() != n * n {
            return Err(Error::InvalidArch(format!("adjacency has {} entries, expected {}", adj.len(), n * n)));
        }
        let mut features = Tensor2::zeros(n, vocab.size());
        for (i, &op) in ops.iter().enumerate() {
            if op >= vocab.size() {
                return Err(Error::OpOutOfRange { index: op, size: vocab.size() });
            }
            features.set(i, op, 1.0);
        }
        let mut fwd = Tensor2::identity(n);
        let mut bwd = Tensor2::identity(n);
        for i in 0..n {
            for j in 0..n {
                if adj[i * n + j] {
                    fwd.set(j, i, 1.0);
                    bwd.set(i, j, 1.0);
                }
            }
        }
        Ok(Self {
            features,
            fwd_adj: normalize(fwd, norm),
            bwd_adj: normalize(bwd, norm),
        })
    }

    /// Recovers the architecture from the one-hot rows and the zero pattern of `fwd_adj`.
    pub fn decode(&self) -> Result<ArchGraph> {
        let n = self.features.rows();
        let ops = (0..n)
            .map(|i| {
                let row = self.features.row(i);
                let hot: Vec<usize> = (0..row.len()).filter(|&c| row[c] != 0.0).collect();
                match hot.as_slice() {
                    [c] if row[*c] == 1.0 => Ok(*c),
                    _ => Err(Error::Parse(format!("feature row {i} is not one-hot"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut adj = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j && self.fwd_adj.get(j, i) != 0.0 {
                    adj[i * n + j] = true;
                }
            }
        }
        ArchGraph::new(ops, adj)
    }
}

pub fn encode_onehot(arch: &ArchGraph, vocab: &OpVocabulary) -> Result<Tensor2> {
    let d0 = vocab.size();
    let mut t = Tensor2::zeros(arch.num_nodes(), d0);
    for (i, &op) in arch.ops.iter().enumerate() {
        if op >= d0 {
            return Err(Error::OpOutOfRange {
                index: op,
                size: d0,
            });
        }
        t.set(i, op, 1.0);
    }
    Ok(t)
}

/// Row-normalised `(fwd_adj, bwd_adj)`.
pub fn build_normalized_adjacency(arch: &ArchGraph) -> (Tensor2, Tensor2) {
    build_normalized_adjacency_with(arch, AdjNormalization::Row)
}

pub fn build_normalized_adjacency_with(
    arch: &ArchGraph,
    norm: AdjNormalization,
) -> (Tensor2, Tensor2) {
    let n = arch.num_nodes();
    // fwd row i gathers from in-neighbours j (edge j -> i), i.e. Aᵀ + I.
    let mut fwd = Tensor2::identity(n);
    let mut bwd = Tensor2::identity(n);
    for (i, j) in arch.edges() {
        fwd.set(j, i, 1.0);
        bwd.set(i, j, 1.0);
    }
    (normalize(fwd, norm), normalize(bwd, norm))
}

fn normalize(mut m: Tensor2, norm: AdjNormalization) -> Tensor2 {
    let n = m.rows();
    let deg: Vec<f64> = (0..n).map(|i| m.row(i).iter().sum()).collect();
    for i in 0..n {
        for j in 0..n {
            let v = m.get(i, j);
            if v != 0.0 {
                let scaled = match norm {
                    AdjNormalization::Row => v / deg[i],
                    AdjNormalization::Symmetric => v / (deg[i] * deg[j]).sqrt(),
                };
                m.set(i, j, scaled);
            }
        }
    }
    m
}

/// MLP input: padded one-hot rows followed by the upper triangle of the
/// padded adjacency, row by row.
pub fn flatten_for_mlp(arch: &ArchGraph, vocab: &OpVocabulary, max_nodes: usize) -> Result<Vec<f64>> {
    let n = arch.num_nodes();
    if n > max_nodes {
        return Err(Error::InvalidArch(format!(
            "{n} nodes exceeds padding size {max_nodes}"
        )));
    }
    let d0 = vocab.size();
    let mut out = vec![0.0; flattened_len(vocab, max_nodes)];
    for (i, &op) in arch.ops.iter().enumerate() {
        if op >= d0 {
            return Err(Error::OpOutOfRange {
                index: op,
                size: d0,
            });
        }
        out[i * d0 + op] = 1.0;
    }
    let mut pos = max_nodes * d0;
    for i in 0..max_nodes {
        for j in (i + 1)..max_nodes {
            if i < n && j < n && arch.edge(i, j) {
                out[pos] = 1.0;
            }
            pos += 1;
        }
    }
    Ok(out)
}

pub fn flattened_len(vocab: &OpVocabulary, max_nodes: usize) -> usize {
    max_nodes * vocab.size() + max_nodes * (max_nodes - 1) / 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// The cell drawn in the encoding figure: input, conv1x1, conv3x3,
    /// conv3x3, conv3x3, max-pool, output.
    pub(crate) fn figure_cell() -> ArchGraph {
        ArchGraph::from_edges(
            vec![0, 1, 2, 2, 2, 3, 4],
            &[(0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (4, 5), (5, 6), (0, 6)],
        )
        .unwrap()
    }

    #[test]
    fn vocabularies() {
        assert_eq!(OpVocabulary::cell().size(), 5);
        assert_eq!(OpVocabulary::linear().size(), 7);
        assert!(OpVocabulary::new(["a", "a"]).is_err());
        assert!(OpVocabulary::new(Vec::<String>::new()).is_err());
        assert_eq!(OpVocabulary::cell().index_of("max-pool"), Some(3));
    }

    #[test]
    fn onehot_of_figure_cell() {
        let arch = figure_cell();
        SpaceSpec::Cell.validate(&arch).unwrap();
        let f = encode_onehot(&arch, &OpVocabulary::cell()).unwrap();
        assert_eq!(f.shape(), (7, 5));
        for (i, &op) in arch.ops().iter().enumerate() {
            let mut expect = vec![0.0; 5];
            expect[op] = 1.0;
            assert_eq!(f.row(i), expect.as_slice());
        }
    }

    #[test]
    fn onehot_single_node() {
        let arch = ArchGraph::new(vec![0], vec![false]).unwrap();
        let vocab = OpVocabulary::new(["a", "b", "c"]).unwrap();
        assert_eq!(encode_onehot(&arch, &vocab).unwrap().data(), &[1.0, 0.0, 0.0]);
        let bad = ArchGraph::new(vec![3], vec![false]).unwrap();
        assert!(matches!(
            encode_onehot(&bad, &vocab),
            Err(Error::OpOutOfRange { index: 3, size: 3 })
        ));
    }

    #[test]
    fn onehot_linear_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let arch = SpaceSpec::Linear.sample(&mut rng);
        let f = encode_onehot(&arch, &OpVocabulary::linear()).unwrap();
        assert_eq!(f.shape(), (22, 7));
        for i in 0..22 {
            assert_eq!(f.row(i).iter().sum::<f64>(), 1.0);
            assert_eq!(f.row(i).iter().filter(|&&v| v != 0.0).count(), 1);
        }
    }

    #[test]
    fn adjacency_single_node() {
        let arch = ArchGraph::new(vec![0], vec![false]).unwrap();
        let (f, b) = build_normalized_adjacency(&arch);
        assert_eq!(f.data(), &[1.0]);
        assert_eq!(b.data(), &[1.0]);
    }

    #[test]
    fn adjacency_two_node_chain() {
        let arch = ArchGraph::chain(vec![0, 1]);
        let (f, b) = build_normalized_adjacency(&arch);
        assert_eq!(f, Tensor2::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap());
        assert_eq!(b, Tensor2::from_rows(&[vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap());
        // independent route: D⁻¹(Aᵀ + I) by dense algebra
        let a = Tensor2::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let m = a.transpose();
        let mut plus_i = Tensor2::identity(2);
        for k in 0..4 {
            plus_i.data_mut()[k] += m.data()[k];
        }
        let dinv = Tensor2::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.5]]).unwrap();
        assert_eq!(dinv.matmul(&plus_i).unwrap(), f);
    }

    #[test]
    fn adjacency_zero_pattern_matches_figure() {
        let arch = figure_cell();
        let (f, b) = build_normalized_adjacency(&arch);
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(b.get(i, j) != 0.0, i == j || arch.edge(i, j));
                assert_eq!(f.get(i, j) != 0.0, i == j || arch.edge(j, i));
            }
        }
    }

    #[test]
    fn symmetric_normalization_is_switchable() {
        let arch = ArchGraph::chain(vec![0, 1]);
        let (f, _) = build_normalized_adjacency_with(&arch, AdjNormalization::Symmetric);
        assert!((f.get(1, 0) - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cell_validity_rules() {
        let ok = ArchGraph::from_edges(vec![0, 2, 4], &[(0, 1), (1, 2)]).unwrap();
        assert!(SpaceSpec::Cell.is_valid(&ok));
        let dangling = ArchGraph::from_edges(vec![0, 2, 4], &[(0, 1), (0, 2)]).unwrap();
        assert!(!SpaceSpec::Cell.is_valid(&dangling));
        let bad_op = ArchGraph::from_edges(vec![0, 4, 4], &[(0, 1), (1, 2)]).unwrap();
        assert!(!SpaceSpec::Cell.is_valid(&bad_op));
        assert!(ArchGraph::new(vec![0, 4], vec![false, false, true, false]).is_err());
        let full: Vec<(usize, usize)> =
            (0..7).flat_map(|i| ((i + 1)..7).map(move |j| (i, j))).collect();
        let dense = ArchGraph::from_edges(vec![0, 1, 1, 1, 1, 1, 4], &full).unwrap();
        assert!(!SpaceSpec::Cell.is_valid(&dense));
    }

    #[test]
    fn sampled_archs_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for space in [SpaceSpec::Cell, SpaceSpec::Linear, SpaceSpec::Synthetic] {
            for _ in 0..300 {
                let a = space.sample(&mut rng);
                space.validate(&a).unwrap();
                assert!(a.topological_order().is_some());
            }
        }
    }

    #[test]
    fn linear_samples_respect_block_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let a = SpaceSpec::Linear.sample(&mut rng);
            assert_eq!(a.num_nodes(), 22);
            assert!(a.ops()[0] < 3);
            for &b in &LINEAR_BLOCK_FIRST {
                assert_ne!(a.ops()[b], 6);
            }
        }
    }

    #[test]
    fn cell_sampler_covers_small_cells() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sizes: BTreeSet<usize> = (0..3000)
            .map(|_| SpaceSpec::Cell.sample(&mut rng).num_nodes())
            .collect();
        assert!(sizes.contains(&7) && sizes.contains(&5));
        // the 2-node cell has exactly one valid matrix
        assert_eq!(cell_valid_matrix_counts()[2], 1);
        // 3 nodes: need 0->1, 1->2, optional 0->2
        assert_eq!(cell_valid_matrix_counts()[3], 2);
    }

    #[test]
    fn sampling_is_deterministic() {
        for space in [SpaceSpec::Cell, SpaceSpec::Linear, SpaceSpec::Synthetic] {
            let mut a = ChaCha8Rng::seed_from_u64(99);
            let mut b = ChaCha8Rng::seed_from_u64(99);
            for _ in 0..50 {
                assert_eq!(space.sample(&mut a), space.sample(&mut b));
            }
        }
    }

    #[test]
    fn cardinalities() {
        assert_eq!(SpaceSpec::Linear.cardinality(), 3 * 6u64.pow(6) * 7u64.pow(15));
        let approx = SpaceSpec::Linear.cardinality() as f64;
        assert!((approx / 6.64e17 - 1.0).abs() < 0.005);
        assert_eq!(SpaceSpec::Cell.cardinality(), 423_624);
        assert_eq!(SpaceSpec::Synthetic.cardinality(), 1024);
        let all = SpaceSpec::Synthetic.enumerate().unwrap();
        let keys: BTreeSet<ArchKey> = all.iter().map(canonical_hash).collect();
        assert_eq!(all.len(), 1024);
        assert_eq!(keys.len(), 1024);
        assert!(all.iter().all(|a| SpaceSpec::Synthetic.is_valid(a)));
    }

    #[test]
    fn synthetic_sampling_is_uniform() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut counts = vec![0usize; 1024];
        let samples = 60_000;
        for _ in 0..samples {
            let a = SpaceSpec::Synthetic.sample(&mut rng);
            let code = a.ops().iter().rev().fold(0, |acc, &op| acc * 4 + op);
            counts[code] += 1;
        }
        let expected = samples as f64 / 1024.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let crit = ChiSquared::new(1023.0).unwrap().inverse_cdf(0.99);
        assert!(chi2 < crit, "chi2 {chi2} >= {crit}");
    }

    #[test]
    fn hash_distinguishes_edges() {
        let a = figure_cell();
        assert_eq!(canonical_hash(&a), canonical_hash(&a.clone()));
        let mut b = a.clone();
        b.flip_edge(1, 2);
        assert_ne!(canonical_hash(&a), canonical_hash(&b));
        // frozen value: the digest must not change between builds
        let chain = ArchGraph::chain(vec![0, 4]);
        assert_eq!(canonical_hash(&chain), canonical_hash(&"ops=0,4;adj=0100".parse().unwrap()));
        assert_eq!(canonical_hash(&chain).to_string().len(), 16);
    }

    #[test]
    fn hash_is_stable_across_runs() {
        let k = canonical_hash(&ArchGraph::chain(vec![0, 4]));
        assert_eq!(k.to_string(), STABLE_CHAIN_KEY);
        assert_eq!(k.to_string().parse::<ArchKey>().unwrap(), k);
    }

    // first 8 bytes of sha256(le32 2, le32 0, le32 4, bits 0100), computed with hashlib
    const STABLE_CHAIN_KEY: &str = "6cc6a198abe94a8a";

    #[test]
    fn flatten_figure_cell() {
        let arch = figure_cell();
        let v = flatten_for_mlp(&arch, &OpVocabulary::cell(), 7).unwrap();
        assert_eq!(v.len(), 56);
        let onehot = encode_onehot(&arch, &OpVocabulary::cell()).unwrap();
        assert_eq!(&v[..35], onehot.data());
        assert_eq!(v[35..].iter().filter(|&&x| x == 1.0).count(), arch.num_edges());
    }

    #[test]
    fn flatten_two_node_cell() {
        let arch = ArchGraph::chain(vec![0, 4]);
        let v = flatten_for_mlp(&arch, &OpVocabulary::cell(), 7).unwrap();
        let mut expect = vec![0.0; 56];
        expect[0] = 1.0; // node 0 = input
        expect[5 + 4] = 1.0; // node 1 = output
        expect[35] = 1.0; // pair (0, 1) is the first upper-triangle entry
        assert_eq!(v, expect);
        assert_eq!(v.iter().filter(|&&x| x == 0.0).count(), 53);
    }

    #[test]
    fn flatten_edge_free_and_oversized() {
        let arch = ArchGraph::new(vec![0], vec![false]).unwrap();
        let v = flatten_for_mlp(&arch, &OpVocabulary::cell(), 7).unwrap();
        assert!(v[35..].iter().all(|&x| x == 0.0));
        let big = ArchGraph::chain(vec![0; 8]);
        assert!(flatten_for_mlp(&big, &OpVocabulary::cell(), 7).is_err());
    }

    #[test]
    fn text_format() {
        let arch = figure_cell();
        let s = arch.to_string();
        assert!(s.starts_with("ops=0,1,2,2,2,3,4;adj="));
        assert_eq!(s.parse::<ArchGraph>().unwrap(), arch);
        assert!("ops=0,1;adj=010".parse::<ArchGraph>().is_err());
        assert!("ops=0,1".parse::<ArchGraph>().is_err());
        assert!("ops=0,x;adj=0100".parse::<ArchGraph>().is_err());
    }

    #[test]
    fn linear_tuple_rejects_forbidden_zero() {
        let mut ops = vec![0usize; 22];
        ops[5] = 6;
        let s = format!(
            "({})",
            ops.iter().map(|o| o.to_string()).collect::<Vec<_>>().join(",")
        );
        assert!(ArchGraph::parse_linear_tuple(&s).is_err());
        assert!(ArchGraph::parse_linear_tuple("0,1,2").is_err());
    }

    fn cell_strategy() -> impl Strategy<Value = ArchGraph> {
        any::<u64>().prop_map(|seed| SpaceSpec::Cell.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
    }

    proptest! {
        #[test]
        fn rows_of_normalized_adjacency_sum_to_one(arch in cell_strategy()) {
            let (f, b) = build_normalized_adjacency(&arch);
            for m in [&f, &b] {
                for i in 0..m.rows() {
                    let s: f64 = m.row(i).iter().sum();
                    prop_assert!((s - 1.0).abs() < 1e-9);
                    prop_assert!(m.row(i).iter().all(|&v| (0.0..=1.0).contains(&v)));
                }
            }
        }

        #[test]
        fn encoding_round_trips(arch in cell_strategy()) {
            let enc = EncodedGraph::new(&arch, &OpVocabulary::cell(), AdjNormalization::Row).unwrap();
            prop_assert_eq!(enc.decode().unwrap(), arch);
        }

        #[test]
        fn text_round_trips(arch in cell_strategy()) {
            let back: ArchGraph = arch.to_string().parse().unwrap();
            prop_assert_eq!(canonical_hash(&back), canonical_hash(&arch));
            prop_assert_eq!(back, arch);
        }
    }
}
