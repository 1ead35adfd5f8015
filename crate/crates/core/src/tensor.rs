//! Dense 2-D tensors with a reverse-mode tape.
//!
//! Only the handful of primitives the predictor needs are supported. There is
//! no broadcasting apart from the explicit [`Tape::add_row_bias`]; batching is
//! done by building one sub-graph per sample on a shared tape.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    /// Builds a tensor from row-major data, rejecting bad lengths and non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "new",
                lhs: (rows, cols),
                rhs: (data.len(), 1),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("new"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(value: f64) -> Self {
        Self::filled(1, 1, value)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Uniform `[-limit, limit]` initialisation.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, limit: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single value of a 1×1 tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            rows: n,
            cols: m,
            data: out,
        })
    }

    /// `self · otherᵀ`
    fn matmul_nt(&self, other: &Self) -> Self {
        let (n, k, m) = (self.rows, self.cols, other.rows);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..m {
                let b_row = &other.data[j * k..(j + 1) * k];
                out[i * m + j] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        Self {
            rows: n,
            cols: m,
            data: out,
        }
    }

    /// `selfᵀ · other`
    fn matmul_tn(&self, other: &Self) -> Self {
        let (k, n, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for p in 0..k {
            let b_row = &other.data[p * m..(p + 1) * m];
            for i in 0..n {
                let a = self.data[p * n + i];
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out[i * m..(i + 1) * m];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Self {
            rows: n,
            cols: m,
            data: out,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    fn check_finite(self, op: &'static str) -> Result<Self> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(Error::NonFinite(op))
        }
    }
}

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRowBias(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Affine(Var, f64),
    MeanRows(Var),
    Dropout(Var, Vec<f64>),
    Sum(Var),
    Mse(Var, Tensor2),
    BceWithLogits(Var, Tensor2),
    MeanOf(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor2,
    op: Op,
}

/// Records primitive operations in execution order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor2, op: Op, name: &'static str) -> Result<Var> {
        let value = value.check_finite(name)?;
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, value: Tensor2) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::Shape {
                op: "add",
                lhs: x.shape(),
                rhs: y.shape(),
            });
        }
        let mut out = x.clone();
        out.add_assign(y);
        self.push(out, Op::Add(a, b), "add")
    }

    /// `x + 1·b` where `b` is a single row added to every row of `x`.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows != 1 || bv.cols != xv.cols {
            return Err(Error::Shape {
                op: "add_row_bias",
                lhs: xv.shape(),
                rhs: bv.shape(),
            });
        }
        let mut out = xv.clone();
        for r in 0..out.rows {
            for (o, b) in out.data[r * out.cols..(r + 1) * out.cols]
                .iter_mut()
                .zip(&bv.data)
            {
                *o += b;
            }
        }
        self.push(out, Op::AddRowBias(x, b), "add_row_bias")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x), "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x), "sigmoid")
    }

    /// `scale·x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let out = self.value(x).map(|v| scale * v + shift);
        self.push(out, Op::Affine(x, scale), "affine")
    }

    /// Averages the rows of `x` into a single row.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows == 0 {
            return Err(Error::Shape {
                op: "mean_rows",
                lhs: xv.shape(),
                rhs: (1, xv.cols),
            });
        }
        let mut out = Tensor2::zeros(1, xv.cols);
        for r in 0..xv.rows {
            for (o, v) in out.data.iter_mut().zip(xv.row(r)) {
                *o += v;
            }
        }
        let inv = 1.0 / xv.rows as f64;
        out.data.iter_mut().for_each(|o| *o *= inv);
        self.push(out, Op::MeanRows(x), "mean_rows")
    }

    /// Inverted dropout. In eval mode this is the identity and records nothing.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let xv = self.value(x);
        let mask: Vec<f64> = (0..xv.len())
            .map(|_| {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let data = xv.data.iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor2 {
            rows: xv.rows,
            cols: xv.cols,
            data,
        };
        self.push(out, Op::Dropout(x, mask), "dropout")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push(Tensor2::scalar(s), Op::Sum(x), "sum")
    }

    /// Mean squared error against a constant target of the same shape.
    pub fn mse(&mut self, pred: Var, target: Tensor2) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(Error::Shape {
                op: "mse",
                lhs: p.shape(),
                rhs: target.shape(),
            });
        }
        let n = p.len() as f64;
        let loss = p
            .data
            .iter()
            .zip(&target.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        self.push(Tensor2::scalar(loss), Op::Mse(pred, target), "mse")
    }

    /// Binary cross-entropy on logits, averaged over elements; targets in {0, 1}.
    pub fn bce_with_logits(&mut self, logits: Var, target: Tensor2) -> Result<Var> {
        let z = self.value(logits);
        if z.shape() != target.shape() {
            return Err(Error::Shape {
                op: "bce_with_logits",
                lhs: z.shape(),
                rhs: target.shape(),
            });
        }
        let n = z.len() as f64;
        let loss = z
            .data
            .iter()
            .zip(&target.data)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        self.push(
            Tensor2::scalar(loss),
            Op::BceWithLogits(logits, target),
            "bce_with_logits",
        )
    }

    /// Mean of scalar nodes.
    pub fn mean_of(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() || xs.iter().any(|&x| self.value(x).shape() != (1, 1)) {
            return Err(Error::InvalidArgument(
                "mean_of expects a nonempty list of scalars".into(),
            ));
        }
        let m = xs.iter().map(|&x| self.value(x).item()).sum::<f64>() / xs.len() as f64;
        self.push(Tensor2::scalar(m), Op::MeanOf(xs.to_vec()), "mean_of")
    }

    /// Reverse pass from a scalar node. The tape is left untouched, so the
    /// pass can be repeated.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor2>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor2::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_nt(self.value(*b));
                    let db = self.value(*a).matmul_tn(&g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AddRowBias(x, b) => {
                    let mut db = Tensor2::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, v) in db.data.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *x, g);
                    accumulate(&mut grads, *b, db);
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let data = g
                        .data
                        .iter()
                        .zip(&xv.data)
                        .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *x, Tensor2 { data, ..g });
                }
                Op::Sigmoid(x) => {
                    let data = g
                        .data
                        .iter()
                        .zip(&node.value.data)
                        .map(|(g, s)| g * s * (1.0 - s))
                        .collect();
                    accumulate(&mut grads, *x, Tensor2 { data, ..g });
                }
                Op::Affine(x, scale) => {
                    accumulate(&mut grads, *x, g.map(|v| v * scale));
                }
                Op::MeanRows(x) => {
                    let xv = self.value(*x);
                    let inv = 1.0 / xv.rows as f64;
                    let mut dx = Tensor2::zeros(xv.rows, xv.cols);
                    for r in 0..xv.rows {
                        for (o, v) in dx.data[r * xv.cols..(r + 1) * xv.cols]
                            .iter_mut()
                            .zip(&g.data)
                        {
                            *o = v * inv;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Dropout(x, mask) => {
                    let data = g.data.iter().zip(mask).map(|(g, m)| g * m).collect();
                    accumulate(&mut grads, *x, Tensor2 { data, ..g });
                }
                Op::Sum(x) => {
                    let xv = self.value(*x);
                    accumulate(&mut grads, *x, Tensor2::filled(xv.rows, xv.cols, g.item()));
                }
                Op::Mse(p, target) => {
                    let pv = self.value(*p);
                    let scale = 2.0 * g.item() / pv.len() as f64;
                    let data = pv
                        .data
                        .iter()
                        .zip(&target.data)
                        .map(|(a, b)| scale * (a - b))
                        .collect();
                    accumulate(
                        &mut grads,
                        *p,
                        Tensor2 {
                            rows: pv.rows,
                            cols: pv.cols,
                            data,
                        },
                    );
                }
                Op::BceWithLogits(z, target) => {
                    let zv = self.value(*z);
                    let scale = g.item() / zv.len() as f64;
                    let data = zv
                        .data
                        .iter()
                        .zip(&target.data)
                        .map(|(&z, &y)| scale * (sigmoid(z) - y))
                        .collect();
                    accumulate(
                        &mut grads,
                        *z,
                        Tensor2 {
                            rows: zv.rows,
                            cols: zv.cols,
                            data,
                        },
                    );
                }
                Op::MeanOf(xs) => {
                    let share = g.item() / xs.len() as f64;
                    for &x in xs {
                        accumulate(&mut grads, x, Tensor2::scalar(share));
                    }
                }
            }
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.data.iter().any(|v| !v.is_finite()) {
                    debug_assert!(matches!(self.nodes[i].op, Op::Leaf));
                    return Err(Error::NonFinite("backward"));
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor2>], v: Var, g: Tensor2) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Gradients of the leaves reached by a backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor2>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor2> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros of `like`'s shape if the leaf was unused.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor2) -> Tensor2 {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor2::zeros(like.rows, like.cols))
    }
}

/// How weight decay enters the update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDecayMode {
    /// `p ← p·(1 − lr·wd)` before the Adam delta.
    #[default]
    Decoupled,
    /// `wd·p` added to the gradient.
    L2,
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor2>,
    v: Vec<Tensor2>,
}

impl AdamState {
    pub fn new(params: &[Tensor2]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(|p| Tensor2::zeros(p.rows, p.cols)).collect(),
            v: params.iter().map(|p| Tensor2::zeros(p.rows, p.cols)).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor2] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor2] {
        &self.v
    }

    /// One bias-corrected Adam update.
    pub fn step(
        &mut self,
        params: &mut [Tensor2],
        grads: &[Tensor2],
        lr: f64,
        weight_decay: f64,
        mode: WeightDecayMode,
    ) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::InvalidArgument(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Shape {
                    op: "adam_step",
                    lhs: p.shape(),
                    rhs: g.shape(),
                });
            }
            if g.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("adam_step gradient"));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.data.len() {
                let mut gi = g.data[i];
                match mode {
                    WeightDecayMode::Decoupled => p.data[i] *= 1.0 - lr * weight_decay,
                    WeightDecayMode::L2 => gi += weight_decay * p.data[i],
                }
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m.data[i] / bc1;
                let v_hat = v.data[i] / bc2;
                p.data[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Cosine decay from `lr0` at step 0 to zero at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> f64 {
    let total = total_steps.max(1) as f64;
    let frac = (step as f64 / total).min(1.0);
    lr0 * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"NPCK";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes a checkpoint.
///
/// Layout, all integers `u32` little-endian:
///
/// ```text
/// "NPCK" version header_len header_bytes(utf-8) tensor_count
/// repeated tensor_count times:
///     name_len name_bytes(utf-8) rows cols rows*cols × f64-le
/// ```
pub fn write_checkpoint<W: Write>(
    mut w: W,
    header: &str,
    tensors: &[(String, Tensor2)],
) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    write_len(&mut w, header.len())?;
    w.write_all(header.as_bytes())?;
    write_len(&mut w, tensors.len())?;
    for (name, t) in tensors {
        write_len(&mut w, name.len())?;
        w.write_all(name.as_bytes())?;
        write_len(&mut w, t.rows)?;
        write_len(&mut w, t.cols)?;
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn write_len<W: Write>(w: &mut W, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::InvalidArgument("length exceeds u32".into()))?;
    w.write_all(&n.to_le_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_string<R: Read>(r: &mut R) -> Result<String> {
    let n = read_u32(r)? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Parse(format!("checkpoint string: {e}")))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(String, Vec<(String, Tensor2)>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Parse("not a checkpoint (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
    }
    let header = read_string(&mut r)?;
    let count = read_u32(&mut r)? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name = read_string(&mut r)?;
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        let mut buf = [0u8; 8];
        for _ in 0..rows * cols {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        tensors.push((name, Tensor2::new(rows, cols, data)?));
    }
    Ok((header, tensors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(rows: &[&[f64]]) -> Tensor2 {
        Tensor2::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    /// Central differences of `f` at every entry of `x`.
    fn numeric_grad(x: &Tensor2, f: impl Fn(&Tensor2) -> f64) -> Tensor2 {
        let eps = 1e-4;
        let mut out = Tensor2::zeros(x.rows(), x.cols());
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += eps;
            let mut minus = x.clone();
            minus.data_mut()[i] -= eps;
            out.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * eps);
        }
        out
    }

    fn assert_close(analytic: &Tensor2, numeric: &Tensor2, rel: f64) {
        for (a, n) in analytic.data().iter().zip(numeric.data()) {
            if a.abs() < 1e-6 && n.abs() < 1e-6 {
                continue;
            }
            let err = (a - n).abs() / a.abs().max(n.abs());
            assert!(err < rel, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn identity_matmul() {
        let x = t(&[&[1.0, -2.0, 3.5], &[0.0, 4.0, 1.0]]);
        assert_eq!(Tensor2::identity(2).matmul(&x).unwrap(), x);
    }

    #[test]
    fn two_by_two_product() {
        let a = t(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = t(&[&[5.0, 6.0], &[7.0, 8.0]]);
        assert_eq!(a.matmul(&b).unwrap(), t(&[&[19.0, 22.0], &[43.0, 50.0]]));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor2::zeros(2, 3);
        let mut tape = Tape::new();
        let va = tape.leaf(a.clone());
        let vb = tape.leaf(a);
        assert!(matches!(tape.matmul(va, vb), Err(Error::Shape { .. })));
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Tensor2::uniform(3, 4, 1.0, &mut rng);
        let b = Tensor2::uniform(4, 2, 1.0, &mut rng);
        let mut tape = Tape::new();
        let va = tape.leaf(a.clone());
        let vb = tape.leaf(b.clone());
        let c = tape.matmul(va, vb).unwrap();
        let s = tape.sum(c).unwrap();
        let grads = tape.backward(s).unwrap();
        let num_a = numeric_grad(&a, |x| x.matmul(&b).unwrap().sum());
        let num_b = numeric_grad(&b, |x| a.matmul(x).unwrap().sum());
        assert_close(grads.get(va).unwrap(), &num_a, 1e-6);
        assert_close(grads.get(vb).unwrap(), &num_b, 1e-6);
    }

    #[test]
    fn elementwise_primitives() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[&[-1.0, 0.0, 2.0]]));
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
        let z = tape.leaf(Tensor2::scalar(0.0));
        let s = tape.sigmoid(z).unwrap();
        assert_eq!(tape.value(s).item(), 0.5);
        let ones = tape.leaf(Tensor2::filled(4, 3, 1.0));
        let m = tape.mean_rows(ones).unwrap();
        assert_eq!(tape.value(m), &Tensor2::filled(1, 3, 1.0));
    }

    #[test]
    fn primitive_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor2::uniform(3, 4, 2.0, &mut rng);
        let bias = Tensor2::uniform(1, 4, 1.0, &mut rng);
        let target = Tensor2::uniform(1, 4, 1.0, &mut rng);
        let labels = Tensor2::new(1, 4, vec![1.0, 0.0, 1.0, 0.0]).unwrap();

        let build = |x: &Tensor2, bias: &Tensor2, tape: &mut Tape| -> (Var, Var, Var) {
            let vx = tape.leaf(x.clone());
            let vb = tape.leaf(bias.clone());
            let h = tape.add_row_bias(vx, vb).unwrap();
            let h = tape.relu(h).unwrap();
            let m = tape.mean_rows(h).unwrap();
            let s = tape.sigmoid(m).unwrap();
            let a = tape.affine(s, 3.0, -1.0).unwrap();
            let l1 = tape.mse(a, target.clone()).unwrap();
            let l2 = tape.bce_with_logits(m, labels.clone()).unwrap();
            let loss = tape.mean_of(&[l1, l2]).unwrap();
            (vx, vb, loss)
        };
        let eval = |x: &Tensor2, bias: &Tensor2| {
            let mut tape = Tape::new();
            let (_, _, loss) = build(x, bias, &mut tape);
            tape.value(loss).item()
        };
        let mut tape = Tape::new();
        let (vx, vb, loss) = build(&x, &bias, &mut tape);
        let grads = tape.backward(loss).unwrap();
        assert_close(grads.get(vx).unwrap(), &numeric_grad(&x, |x| eval(x, &bias)), 1e-3);
        assert_close(grads.get(vb).unwrap(), &numeric_grad(&bias, |b| eval(&x, b)), 1e-3);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor2::uniform(3, 5, 1.0, &mut ChaCha8Rng::seed_from_u64(0)));
        let s = tape.sum(w).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(w).unwrap(), &Tensor2::filled(3, 5, 1.0));
        let g2 = tape.backward(s).unwrap();
        assert_eq!(g.get(w), g2.get(w));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor2::zeros(2, 2));
        assert!(tape.backward(w).is_err());
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::filled(50, 40, 1.0));
        assert_eq!(tape.dropout(x, 0.3, &mut rng, false).unwrap(), x);
        assert!(tape.dropout(x, 1.0, &mut rng, true).is_err());
        assert!(tape.dropout(x, -0.1, &mut rng, true).is_err());
        let d = tape.dropout(x, 0.25, &mut rng, true).unwrap();
        let vals = tape.value(d).data();
        assert!(vals.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12));
        // inverted scaling keeps the expectation
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Tensor2::new(1, 1, vec![f64::NAN]).is_err());
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor2::scalar(1e308));
        assert!(matches!(tape.affine(x, 10.0, 0.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut params = vec![Tensor2::filled(2, 2, 0.7)];
        let mut state = AdamState::new(&params);
        state
            .step(&mut params, &[Tensor2::zeros(2, 2)], 0.1, 0.0, WeightDecayMode::Decoupled)
            .unwrap();
        assert_eq!(params[0], Tensor2::filled(2, 2, 0.7));
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_first_step_is_minus_lr() {
        let mut params = vec![Tensor2::scalar(0.0)];
        let mut state = AdamState::new(&params);
        state
            .step(&mut params, &[Tensor2::scalar(1.0)], 0.1, 0.0, WeightDecayMode::Decoupled)
            .unwrap();
        assert!((params[0].item() + 0.1).abs() < 1e-8);
    }

    #[test]
    fn decoupled_decay_scales_before_delta() {
        let mut params = vec![Tensor2::scalar(1.0)];
        let mut state = AdamState::new(&params);
        state
            .step(&mut params, &[Tensor2::scalar(0.0)], 0.1, 0.001, WeightDecayMode::Decoupled)
            .unwrap();
        assert!((params[0].item() - 0.9999).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut params = vec![Tensor2::scalar(1.0)];
        let mut state = AdamState::new(&params);
        let mut bad = Tensor2::scalar(0.0);
        bad.data_mut()[0] = f64::INFINITY;
        assert!(state
            .step(&mut params, &[bad], 0.1, 0.0, WeightDecayMode::Decoupled)
            .is_err());
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(0, 100, 0.3), 0.3);
        assert!(cosine_lr(100, 100, 0.3).abs() < 1e-17);
        assert!((cosine_lr(50, 100, 0.3) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let tensors = vec![
            ("w0".to_string(), Tensor2::uniform(3, 2, 1.0, &mut rng)),
            ("b0".to_string(), Tensor2::zeros(1, 2)),
        ];
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "{\"k\":1}", &tensors).unwrap();
        assert_eq!(&buf[..4], b"NPCK");
        // magic + version + header + count + (len+name+rows+cols+data) per tensor
        assert_eq!(buf.len(), 4 + 4 + 4 + 7 + 4 + (4 + 2 + 8 + 48) + (4 + 2 + 8 + 16));
        let (header, back) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(header, "{\"k\":1}");
        assert_eq!(back, tensors);
        assert!(read_checkpoint(&b"XXXX"[..]).is_err());
    }
}
