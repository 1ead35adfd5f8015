//! Bidirectional graph-convolutional accuracy predictor.
//!
//! A model maps one-hot node features through a learned input projection,
//! `num_gc_layers` bidirectional graph convolutions
//!
//! ```text
//! V' = ½·ReLU(F·V·W⁺) + ½·ReLU(B·V·W⁻)
//! ```
//!
//! (`F`, `B` the normalised forward/backward adjacencies), a mean over nodes,
//! and a fully-connected head. Regression heads emit `lo + (hi − lo)·σ(z)` in
//! percent; classification heads emit `σ(z)`.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{flatten_for_mlp, flattened_len, AdjNormalization, ArchGraph, EncodedGraph, OpVocabulary};
use crate::error::{Error, Result};
use crate::metrics;
use crate::tensor::{
    cosine_lr, read_checkpoint, sigmoid, write_checkpoint, AdamState, Tape, Tensor2, Var,
    WeightDecayMode,
};

/// Node representation size by training-set size, for the 3-layer cell predictor.
pub const NODE_DIM_BY_SAMPLES: [(usize, usize); 6] =
    [(43, 48), (86, 72), (129, 96), (172, 144), (334, 210), (860, 320)];

/// Validation MSE without and with the classifier stage, as reported for
/// NASBench-101 (10 random splits). Needs the real table to reproduce.
pub const REPORTED_SINGLE_STAGE_MSE: f64 = 1.95;
pub const REPORTED_TWO_STAGE_MSE: f64 = 0.66;

/// Accuracy threshold of the classifier stage on NASBench-101, in percent.
pub const DEFAULT_CLASS_THRESHOLD: f64 = 91.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    #[default]
    Regression,
    Classification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcnConfig {
    pub num_gc_layers: usize,
    pub node_dim: usize,
    pub fc_hidden_dims: Vec<usize>,
    pub output_head: OutputHead,
    pub dropout_rate: f64,
    pub lr0: f64,
    pub weight_decay: f64,
    pub weight_decay_mode: WeightDecayMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub sigmoid_lo: f64,
    pub sigmoid_hi: f64,
    pub adj_norm: AdjNormalization,
    /// Accuracy (percent) above which a sample is a positive for classifiers.
    pub class_threshold: f64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self::nasbench_regressor()
    }
}

impl GcnConfig {
    /// Cell-space regressor: 3 GC layers, FC 128, lr 1e-4, wd 1e-3, dropout 0.1.
    pub fn nasbench_regressor() -> Self {
        Self {
            num_gc_layers: 3,
            node_dim: 144,
            fc_hidden_dims: vec![128],
            output_head: OutputHead::Regression,
            dropout_rate: 0.1,
            lr0: 1e-4,
            weight_decay: 1e-3,
            weight_decay_mode: WeightDecayMode::Decoupled,
            epochs: 300,
            batch_size: 10,
            sigmoid_lo: 10.0,
            sigmoid_hi: 100.0,
            adj_norm: AdjNormalization::Row,
            class_threshold: DEFAULT_CLASS_THRESHOLD,
        }
    }

    /// Same as the regressor with a classification head and lr 2e-4.
    pub fn nasbench_classifier() -> Self {
        Self {
            output_head: OutputHead::Classification,
            lr0: 2e-4,
            ..Self::nasbench_regressor()
        }
    }

    /// Linear-space regressor: 18 GC layers of width 96, FC 512/128, lr 1e-3, wd 1e-5.
    pub fn mobile_regressor() -> Self {
        Self {
            num_gc_layers: 18,
            node_dim: 96,
            fc_hidden_dims: vec![512, 128],
            lr0: 1e-3,
            weight_decay: 1e-5,
            ..Self::nasbench_regressor()
        }
    }

    /// Small predictor for desk-scale synthetic experiments. The learning
    /// rate is higher than the cell default because far fewer steps are run.
    pub fn desk_regressor() -> Self {
        Self {
            node_dim: 24,
            fc_hidden_dims: vec![32],
            lr0: 3e-3,
            epochs: 150,
            ..Self::nasbench_regressor()
        }
    }

    /// Table lookup of the node size for `n` training samples (nearest listed `n` at or below).
    pub fn node_dim_for_samples(n: usize) -> usize {
        NODE_DIM_BY_SAMPLES
            .iter()
            .rev()
            .find(|(samples, _)| *samples <= n)
            .map_or(NODE_DIM_BY_SAMPLES[0].1, |(_, d)| *d)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_gc_layers < 1 {
            return fail("num_gc_layers must be >= 1".into());
        }
        if self.node_dim < 1 {
            return fail("node_dim must be >= 1".into());
        }
        if self.fc_hidden_dims.contains(&0) {
            return fail("fc_hidden_dims entries must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.sigmoid_lo >= self.sigmoid_hi {
            return fail("sigmoid_lo must be < sigmoid_hi".into());
        }
        if self.batch_size < 1 || self.epochs < 1 {
            return fail("epochs and batch_size must be >= 1".into());
        }
        if !(self.lr0 > 0.0) || self.weight_decay < 0.0 {
            return fail("lr0 must be > 0 and weight_decay >= 0".into());
        }
        Ok(())
    }

    fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            lr0: self.lr0,
            weight_decay: self.weight_decay,
            weight_decay_mode: self.weight_decay_mode,
            epochs: self.epochs,
            batch_size: self.batch_size,
            dropout_rate: self.dropout_rate,
        }
    }

    fn head(&self) -> Head {
        Head {
            kind: self.output_head,
            lo: self.sigmoid_lo,
            hi: self.sigmoid_hi,
        }
    }

    /// Trainable parameter count for a given input vocabulary size.
    pub fn param_count(&self, vocab_size: usize) -> usize {
        let d = self.node_dim;
        let mut n = vocab_size * d + self.num_gc_layers * 2 * d * d;
        let mut prev = d;
        for &h in &self.fc_hidden_dims {
            n += prev * h + h;
            prev = h;
        }
        n + prev + 1
    }

    /// Smallest node size whose parameter count is at least `factor` times the current one.
    pub fn grown(&self, vocab_size: usize, factor: f64) -> Self {
        let target = factor * self.param_count(vocab_size) as f64;
        let mut cfg = self.clone();
        while (cfg.param_count(vocab_size) as f64) < target {
            cfg.node_dim += 1;
        }
        cfg
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct TrainSettings {
    lr0: f64,
    weight_decay: f64,
    weight_decay_mode: WeightDecayMode,
    epochs: usize,
    batch_size: usize,
    dropout_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Head {
    kind: OutputHead,
    lo: f64,
    hi: f64,
}

impl Head {
    fn output(&self, z: f64) -> f64 {
        match self.kind {
            OutputHead::Regression => self.lo + (self.hi - self.lo) * sigmoid(z),
            OutputHead::Classification => sigmoid(z),
        }
    }
}

/// A (architecture, single-run validation accuracy in percent) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub arch: ArchGraph,
    pub accuracy: f64,
}

impl LabeledSample {
    pub fn new(arch: ArchGraph, accuracy: f64) -> Result<Self> {
        if !(accuracy > 0.0 && accuracy <= 100.0) {
            return Err(Error::InvalidArgument(format!(
                "accuracy {accuracy} outside (0, 100]"
            )));
        }
        Ok(Self { arch, accuracy })
    }
}

/// A differentiable network producing a 1×1 logit per input.
trait Network {
    type Input;

    fn params(&self) -> &[Tensor2];
    fn params_mut(&mut self) -> &mut [Tensor2];
    fn head(&self) -> Head;
    fn logit<R: Rng>(
        &self,
        tape: &mut Tape,
        params: &[Var],
        input: &Self::Input,
        dropout: Option<(f64, &mut R)>,
    ) -> Result<Var>;
}

/// He-style uniform fan-in initialisation.
fn he_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor2 {
    Tensor2::uniform(rows, cols, (6.0 / rows as f64).sqrt(), rng)
}

/// Applies the hidden FC stack (ReLU + dropout) and the output layer.
fn fc_head<R: Rng>(
    tape: &mut Tape,
    params: &[Var],
    mut x: Var,
    hidden: usize,
    mut dropout: Option<(f64, &mut R)>,
) -> Result<Var> {
    for k in 0..hidden {
        let h = tape.matmul(x, params[2 * k])?;
        let h = tape.add_row_bias(h, params[2 * k + 1])?;
        let h = tape.relu(h)?;
        x = match dropout.as_mut() {
            Some((rate, rng)) => tape.dropout(h, *rate, *rng, true)?,
            None => h,
        };
    }
    let z = tape.matmul(x, params[2 * hidden])?;
    tape.add_row_bias(z, params[2 * hidden + 1])
}

fn fc_params(input: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Vec<Tensor2> {
    let mut out = Vec::new();
    let mut prev = input;
    for &h in hidden {
        out.push(he_uniform(prev, h, rng));
        out.push(Tensor2::zeros(1, h));
        prev = h;
    }
    out.push(he_uniform(prev, 1, rng));
    out.push(Tensor2::zeros(1, 1));
    out
}

/// The bidirectional GCN.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnModel {
    config: GcnConfig,
    vocab: OpVocabulary,
    params: Vec<Tensor2>,
}

impl GcnModel {
    /// Randomly initialised model. Parameter order: input projection,
    /// `(W⁺, W⁻)` per layer, `(W, b)` per hidden FC layer, output `(W, b)`.
    pub fn new(config: GcnConfig, vocab: OpVocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.node_dim;
        let mut params = vec![he_uniform(vocab.size(), d, &mut rng)];
        for _ in 0..config.num_gc_layers {
            params.push(he_uniform(d, d, &mut rng));
            params.push(he_uniform(d, d, &mut rng));
        }
        params.extend(fc_params(d, &config.fc_hidden_dims, &mut rng));
        Ok(Self {
            config,
            vocab,
            params,
        })
    }

    pub fn config(&self) -> &GcnConfig {
        &self.config
    }

    pub fn vocabulary(&self) -> &OpVocabulary {
        &self.vocab
    }

    pub fn parameters(&self) -> &[Tensor2] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Tensor2] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor2::len).sum()
    }

    pub fn encode(&self, arch: &ArchGraph) -> Result<EncodedGraph> {
        EncodedGraph::new(arch, &self.vocab, self.config.adj_norm)
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = vec!["input_proj".to_string()];
        for l in 0..self.config.num_gc_layers {
            names.push(format!("gc{l}.w_fwd"));
            names.push(format!("gc{l}.w_bwd"));
        }
        for k in 0..self.config.fc_hidden_dims.len() {
            names.push(format!("fc{k}.w"));
            names.push(format!("fc{k}.b"));
        }
        names.push("out.w".into());
        names.push("out.b".into());
        names
    }

    /// Pre-activation output `z` for an encoded graph.
    pub fn logit_encoded(&self, enc: &EncodedGraph) -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let z = Network::logit::<ChaCha8Rng>(self, &mut tape, &vars, enc, None)?;
        Ok(tape.value(z).item())
    }

    pub fn logit(&self, arch: &ArchGraph) -> Result<f64> {
        self.logit_encoded(&self.encode(arch)?)
    }

    /// Maps a pre-activation through this model's output head.
    pub fn output_from_logit(&self, z: f64) -> f64 {
        self.config.head().output(z)
    }

    /// Predicted accuracy in percent; requires a regression head.
    pub fn predict_accuracy(&self, arch: &ArchGraph) -> Result<f64> {
        if self.config.output_head != OutputHead::Regression {
            return Err(Error::InvalidArgument(
                "predict_accuracy needs a regression head".into(),
            ));
        }
        Ok(self.output_from_logit(self.logit(arch)?))
    }

    /// Probability that the accuracy exceeds the class threshold; requires a classification head.
    pub fn classify_quality(&self, arch: &ArchGraph) -> Result<f64> {
        if self.config.output_head != OutputHead::Classification {
            return Err(Error::InvalidArgument(
                "classify_quality needs a classification head".into(),
            ));
        }
        Ok(self.output_from_logit(self.logit(arch)?))
    }

    /// Mean training loss over `batch` (no dropout) and its gradient for
    /// every parameter tensor, in [`GcnModel::parameters`] order. Targets
    /// are accuracies for regression heads and 0/1 labels for classifiers.
    pub fn loss_and_gradients(&self, batch: &[(EncodedGraph, f64)]) -> Result<(f64, Vec<Tensor2>)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let mut losses = Vec::with_capacity(batch.len());
        for (enc, target) in batch {
            let z = Network::logit(self, &mut tape, &vars, enc, None::<(f64, &mut ChaCha8Rng)>)?;
            losses.push(sample_loss(&mut tape, self.config.head(), z, *target)?);
        }
        let loss = tape.mean_of(&losses)?;
        let grads = tape.backward(loss)?;
        let grads = vars.iter().zip(&self.params).map(|(&v, p)| grads.get_or_zeros(v, p)).collect();
        Ok((tape.value(loss).item(), grads))
    }

    /// Writes the config as a JSON header followed by the named tensors.
    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let header = serde_json::json!({
            "kind": "gcn",
            "config": self.config,
            "vocabulary": self.vocab.names(),
        });
        let tensors: Vec<(String, Tensor2)> = self
            .param_names()
            .into_iter()
            .zip(self.params.iter().cloned())
            .collect();
        write_checkpoint(w, &header.to_string(), &tensors)
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let (header, tensors) = read_checkpoint(r)?;
        let header: serde_json::Value =
            serde_json::from_str(&header).map_err(|e| Error::Parse(format!("checkpoint header: {e}")))?;
        if header["kind"] != "gcn" {
            return Err(Error::Parse("checkpoint is not a GCN model".into()));
        }
        let config: GcnConfig = serde_json::from_value(header["config"].clone())
            .map_err(|e| Error::Parse(format!("checkpoint config: {e}")))?;
        let names: Vec<String> = serde_json::from_value(header["vocabulary"].clone())
            .map_err(|e| Error::Parse(format!("checkpoint vocabulary: {e}")))?;
        let mut model = Self::new(config, OpVocabulary::new(names)?, 0)?;
        let expected = model.param_names();
        if tensors.len() != expected.len() {
            return Err(Error::Parse(format!(
                "checkpoint has {} tensors, config implies {}",
                tensors.len(),
                expected.len()
            )));
        }
        for ((slot, name), (got_name, t)) in model.params.iter_mut().zip(&expected).zip(tensors) {
            if *name != got_name || slot.shape() != t.shape() {
                return Err(Error::Parse(format!(
                    "checkpoint tensor {got_name} {:?} does not match {name} {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(model)
    }
}

impl Network for GcnModel {
    type Input = EncodedGraph;

    fn params(&self) -> &[Tensor2] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Tensor2] {
        &mut self.params
    }

    fn head(&self) -> Head {
        self.config.head()
    }

    fn logit<R: Rng>(
        &self,
        tape: &mut Tape,
        params: &[Var],
        input: &EncodedGraph,
        dropout: Option<(f64, &mut R)>,
    ) -> Result<Var> {
        if input.features.cols() != self.vocab.size() {
            return Err(Error::Shape {
                op: "gcn input",
                lhs: input.features.shape(),
                rhs: (input.features.rows(), self.vocab.size()),
            });
        }
        let x = tape.leaf(input.features.clone());
        let fwd = tape.leaf(input.fwd_adj.clone());
        let bwd = tape.leaf(input.bwd_adj.clone());
        let mut v = tape.matmul(x, params[0])?;
        for l in 0..self.config.num_gc_layers {
            v = forward_layer(tape, v, fwd, bwd, params[1 + 2 * l], params[2 + 2 * l])?;
        }
        let pooled = tape.mean_rows(v)?;
        let head_params = &params[1 + 2 * self.config.num_gc_layers..];
        fc_head(tape, head_params, pooled, self.config.fc_hidden_dims.len(), dropout)
    }
}

/// `½·ReLU(fwd·V·W⁺) + ½·ReLU(bwd·V·W⁻)`
pub fn forward_layer(
    tape: &mut Tape,
    v: Var,
    fwd_adj: Var,
    bwd_adj: Var,
    w_fwd: Var,
    w_bwd: Var,
) -> Result<Var> {
    let a = tape.matmul(fwd_adj, v)?;
    let a = tape.matmul(a, w_fwd)?;
    let a = tape.relu(a)?;
    let a = tape.affine(a, 0.5, 0.0)?;
    let b = tape.matmul(bwd_adj, v)?;
    let b = tape.matmul(b, w_bwd)?;
    let b = tape.relu(b)?;
    let b = tape.affine(b, 0.5, 0.0)?;
    tape.add(a, b)
}

/// Loss curve of a training run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

fn fit<N: Network>(
    net: &mut N,
    inputs: &[N::Input],
    targets: &[f64],
    settings: TrainSettings,
    seed: u64,
) -> Result<TrainReport> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("training data is empty".into()));
    }
    let head = net.head();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7a1e);
    let mut adam = AdamState::new(net.params());
    let batches_per_epoch = inputs.len().div_ceil(settings.batch_size);
    let total_steps = settings.epochs * batches_per_epoch;
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut report = TrainReport::default();
    let mut step = 0;
    for epoch in 0..settings.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(settings.batch_size) {
            let mut tape = Tape::new();
            let vars: Vec<Var> = net.params().iter().map(|p| tape.leaf(p.clone())).collect();
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let dropout = (settings.dropout_rate > 0.0).then_some((settings.dropout_rate, &mut rng));
                let z = net.logit(&mut tape, &vars, &inputs[i], dropout);
                let z = z.map_err(|e| diverged(e, epoch))?;
                let loss = sample_loss(&mut tape, head, z, targets[i]);
                losses.push(loss.map_err(|e| diverged(e, epoch))?);
            }
            let loss = tape.mean_of(&losses).map_err(|e| diverged(e, epoch))?;
            epoch_loss += tape.value(loss).item() * batch.len() as f64;
            let grads = tape.backward(loss).map_err(|e| diverged(e, epoch))?;
            let grads: Vec<Tensor2> = vars
                .iter()
                .zip(net.params())
                .map(|(&v, p)| grads.get_or_zeros(v, p))
                .collect();
            let lr = cosine_lr(step, total_steps, settings.lr0);
            adam.step(
                net.params_mut(),
                &grads,
                lr,
                settings.weight_decay,
                settings.weight_decay_mode,
            )
            .map_err(|e| diverged(e, epoch))?;
            step += 1;
        }
        let mean = epoch_loss / inputs.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        report.epoch_losses.push(mean);
    }
    Ok(report)
}

fn sample_loss(tape: &mut Tape, head: Head, z: Var, target: f64) -> Result<Var> {
    match head.kind {
        OutputHead::Regression => {
            let s = tape.sigmoid(z)?;
            let pred = tape.affine(s, head.hi - head.lo, head.lo)?;
            tape.mse(pred, Tensor2::scalar(target))
        }
        OutputHead::Classification => tape.bce_with_logits(z, Tensor2::scalar(target)),
    }
}

fn diverged(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite(_) => Error::Diverged { epoch },
        other => other,
    }
}

fn targets_for(cfg: &GcnConfig, data: &[LabeledSample]) -> Vec<f64> {
    data.iter()
        .map(|s| match cfg.output_head {
            OutputHead::Regression => s.accuracy,
            OutputHead::Classification => f64::from(u8::from(s.accuracy > cfg.class_threshold)),
        })
        .collect()
}

/// Trains a fresh GCN on `data`. Deterministic for a given seed.
pub fn train(
    cfg: &GcnConfig,
    vocab: &OpVocabulary,
    data: &[LabeledSample],
    seed: u64,
) -> Result<GcnModel> {
    train_with_report(cfg, vocab, data, seed).map(|(m, _)| m)
}

pub fn train_with_report(
    cfg: &GcnConfig,
    vocab: &OpVocabulary,
    data: &[LabeledSample],
    seed: u64,
) -> Result<(GcnModel, TrainReport)> {
    let mut model = GcnModel::new(cfg.clone(), vocab.clone(), seed)?;
    let inputs = data
        .iter()
        .map(|s| model.encode(&s.arch))
        .collect::<Result<Vec<_>>>()?;
    let report = fit(
        &mut model,
        &inputs,
        &targets_for(cfg, data),
        cfg.train_settings(),
        seed,
    )?;
    Ok((model, report))
}

/// Outcome of the cascade for one architecture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Prediction {
    Accepted(f64),
    Rejected,
}

impl Prediction {
    /// Ranking value: rejected architectures sort below every accepted one.
    pub fn rank_value(self) -> f64 {
        match self {
            Self::Accepted(v) => v,
            Self::Rejected => f64::NEG_INFINITY,
        }
    }
}

/// Filters with the classifier (probability < 0.5 rejects), then regresses.
pub fn two_stage_predict(
    classifier: &GcnModel,
    regressor: &GcnModel,
    arch: &ArchGraph,
) -> Result<Prediction> {
    let p = classifier.classify_quality(arch)?;
    cascade(p, || regressor.predict_accuracy(arch))
}

fn cascade(probability: f64, regress: impl FnOnce() -> Result<f64>) -> Result<Prediction> {
    if probability < 0.5 {
        Ok(Prediction::Rejected)
    } else {
        regress().map(Prediction::Accepted)
    }
}

/// Either a single regressor or a classifier/regressor cascade.
#[derive(Clone, Debug)]
pub enum Predictor {
    Single(GcnModel),
    TwoStage {
        classifier: GcnModel,
        regressor: GcnModel,
    },
}

impl Predictor {
    pub fn predict(&self, arch: &ArchGraph) -> Result<Prediction> {
        match self {
            Self::Single(m) => m.predict_accuracy(arch).map(Prediction::Accepted),
            Self::TwoStage {
                classifier,
                regressor,
            } => two_stage_predict(classifier, regressor, arch),
        }
    }
}

/// Trains the classifier on all samples and the regressor on the samples
/// above the classifier threshold (all samples if fewer than 2 qualify).
pub fn train_two_stage(
    classifier_cfg: &GcnConfig,
    regressor_cfg: &GcnConfig,
    vocab: &OpVocabulary,
    data: &[LabeledSample],
    seed: u64,
) -> Result<Predictor> {
    let classifier = train(classifier_cfg, vocab, data, seed)?;
    let good: Vec<LabeledSample> = data
        .iter()
        .filter(|s| s.accuracy > classifier_cfg.class_threshold)
        .cloned()
        .collect();
    let reg_data = if good.len() >= 2 { &good[..] } else { data };
    let regressor = train(regressor_cfg, vocab, reg_data, seed.wrapping_add(1))?;
    Ok(Predictor::TwoStage {
        classifier,
        regressor,
    })
}

/// Random train/validation split protocol.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    /// Fraction of samples held out for validation.
    pub holdout: f64,
    pub repeats: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            holdout: 1.0 / 3.0,
            repeats: 1,
        }
    }
}

impl SplitSpec {
    /// Shuffled index split; at least one sample lands on each side.
    pub fn split(&self, n: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let n_val = ((n as f64 * self.holdout).round() as usize).clamp(1, n - 1);
        let val = idx.split_off(n - n_val);
        (idx, val)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvScore {
    pub config: GcnConfig,
    pub mean_mse: f64,
    pub sd_mse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvResult {
    pub best: GcnConfig,
    pub scores: Vec<CvScore>,
}

/// Scores every config by validation MSE over `split.repeats` random splits
/// and returns the argmin. For classification heads the score is the MSE of
/// the predicted probability against the 0/1 label.
pub fn cross_validate(
    data: &[LabeledSample],
    grid: &[GcnConfig],
    vocab: &OpVocabulary,
    split: SplitSpec,
    seed: u64,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty config grid".into()));
    }
    if data.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "cross-validation needs at least 3 samples, got {}",
            data.len()
        )));
    }
    if split.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be >= 1".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    for cfg in grid {
        cfg.validate()?;
        let mut split_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mses = Vec::with_capacity(split.repeats);
        for r in 0..split.repeats {
            let (tr, va) = split.split(data.len(), &mut split_rng);
            let train_set: Vec<LabeledSample> = tr.iter().map(|&i| data[i].clone()).collect();
            let model = train(cfg, vocab, &train_set, seed.wrapping_add(r as u64))?;
            let targets = targets_for(cfg, data);
            let mut pred = Vec::with_capacity(va.len());
            let mut truth = Vec::with_capacity(va.len());
            for &i in &va {
                pred.push(model.output_from_logit(model.logit(&data[i].arch)?));
                truth.push(targets[i]);
            }
            mses.push(metrics::mse(&pred, &truth)?);
        }
        let (mean_mse, sd_mse) = metrics::mean_sd(&mses);
        scores.push(CvScore {
            config: cfg.clone(),
            mean_mse,
            sd_mse,
        });
    }
    let best = scores
        .iter()
        .min_by(|a, b| a.mean_mse.total_cmp(&b.mean_mse))
        .map(|s| s.config.clone())
        .expect("grid is nonempty");
    Ok(CvResult { best, scores })
}

/// Cross-validation followed by a full-data retrain.
#[derive(Clone, Debug, PartialEq)]
pub struct FitProtocol {
    pub split: SplitSpec,
    /// Grow the node size so the final model has this many times the
    /// parameters of the selected one (1.0 disables).
    pub param_growth: f64,
}

impl Default for FitProtocol {
    fn default() -> Self {
        Self {
            split: SplitSpec::default(),
            param_growth: 1.5,
        }
    }
}

/// Selects a config from `grid` (skipping validation runs when the grid has
/// a single entry), grows it, and retrains on all data.
pub fn fit_with_protocol(
    data: &[LabeledSample],
    grid: &[GcnConfig],
    vocab: &OpVocabulary,
    protocol: &FitProtocol,
    seed: u64,
) -> Result<GcnModel> {
    let chosen = match grid {
        [] => return Err(Error::InvalidArgument("empty config grid".into())),
        [only] => only.clone(),
        _ => cross_validate(data, grid, vocab, protocol.split, seed)?.best,
    };
    let final_cfg = if protocol.param_growth > 1.0 {
        chosen.grown(vocab.size(), protocol.param_growth)
    } else {
        chosen
    };
    train(&final_cfg, vocab, data, seed)
}

/// Configuration of the flattened-input MLP baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden_dims: Vec<usize>,
    pub max_nodes: usize,
    pub dropout_rate: f64,
    pub lr0: f64,
    pub weight_decay: f64,
    pub weight_decay_mode: WeightDecayMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub sigmoid_lo: f64,
    pub sigmoid_hi: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![128, 128],
            max_nodes: 7,
            dropout_rate: 0.1,
            lr0: 1e-3,
            weight_decay: 1e-3,
            weight_decay_mode: WeightDecayMode::Decoupled,
            epochs: 300,
            batch_size: 10,
            sigmoid_lo: 10.0,
            sigmoid_hi: 100.0,
        }
    }
}

/// MLP over [`flatten_for_mlp`] vectors with the same scaled-sigmoid output.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    config: MlpConfig,
    vocab: OpVocabulary,
    params: Vec<Tensor2>,
}

impl MlpModel {
    pub fn new(config: MlpConfig, vocab: OpVocabulary, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&config.dropout_rate) || config.sigmoid_lo >= config.sigmoid_hi {
            return Err(Error::Config("invalid MLP config".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = fc_params(
            flattened_len(&vocab, config.max_nodes),
            &config.hidden_dims,
            &mut rng,
        );
        Ok(Self {
            config,
            vocab,
            params,
        })
    }

    fn input(&self, arch: &ArchGraph) -> Result<Tensor2> {
        let v = flatten_for_mlp(arch, &self.vocab, self.config.max_nodes)?;
        Tensor2::new(1, v.len(), v)
    }

    pub fn logit(&self, arch: &ArchGraph) -> Result<f64> {
        let input = self.input(arch)?;
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let z = Network::logit::<ChaCha8Rng>(self, &mut tape, &vars, &input, None)?;
        Ok(tape.value(z).item())
    }

    pub fn output_from_logit(&self, z: f64) -> f64 {
        self.head().output(z)
    }

    pub fn predict_accuracy(&self, arch: &ArchGraph) -> Result<f64> {
        Ok(self.output_from_logit(self.logit(arch)?))
    }
}

impl Network for MlpModel {
    type Input = Tensor2;

    fn params(&self) -> &[Tensor2] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Tensor2] {
        &mut self.params
    }

    fn head(&self) -> Head {
        Head {
            kind: OutputHead::Regression,
            lo: self.config.sigmoid_lo,
            hi: self.config.sigmoid_hi,
        }
    }

    fn logit<R: Rng>(
        &self,
        tape: &mut Tape,
        params: &[Var],
        input: &Tensor2,
        dropout: Option<(f64, &mut R)>,
    ) -> Result<Var> {
        let x = tape.leaf(input.clone());
        fc_head(tape, params, x, self.config.hidden_dims.len(), dropout)
    }
}

pub fn train_mlp_baseline(
    cfg: &MlpConfig,
    vocab: &OpVocabulary,
    data: &[LabeledSample],
    seed: u64,
) -> Result<MlpModel> {
    let mut model = MlpModel::new(cfg.clone(), vocab.clone(), seed)?;
    let inputs = data
        .iter()
        .map(|s| model.input(&s.arch))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<f64> = data.iter().map(|s| s.accuracy).collect();
    let settings = TrainSettings {
        lr0: cfg.lr0,
        weight_decay: cfg.weight_decay,
        weight_decay_mode: cfg.weight_decay_mode,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        dropout_rate: cfg.dropout_rate,
    };
    fit(&mut model, &inputs, &targets, settings, seed)?;
    Ok(model)
}
