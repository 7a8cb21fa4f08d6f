//! Tensor-level tape for reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value and whatever it
//! needs for the backward sweep. Nodes only reference earlier nodes, so the
//! node list is already in topological order and `backward` walks it in
//! reverse.

use std::fmt;

use crate::error::{Error, Result};

use super::param::{ParamId, ParamStore};
use super::sparsemax::{sparsemax_row, sparsemax_row_backward};
use super::tensor::{gemm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Backward rule for operations defined outside this module.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    /// Gradient with respect to each input, given the gradient of the output.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad_out: &Tensor) -> Vec<Tensor>;
}

enum Op {
    Constant,
    Param(ParamId),
    Linear {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Affine {
        x: NodeId,
        scale: f64,
    },
    Relu(NodeId),
    Glu(NodeId),
    Sparsemax(NodeId),
    LogSoftmax(NodeId),
    SliceCols {
        x: NodeId,
        start: usize,
    },
    ConcatCols(Vec<NodeId>),
    Gather {
        table: NodeId,
        codes: Vec<usize>,
    },
    Sum(NodeId),
    Mean(NodeId),
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        x_hat: Tensor,
        // chunk-major, `cols` entries per chunk
        inv_std: Vec<f64>,
        chunk: usize,
        train: bool,
    },
    Custom {
        inputs: Vec<NodeId>,
        op: Box<dyn CustomOp>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::Linear { .. } => "linear",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Affine { .. } => "affine",
            Op::Relu(_) => "relu",
            Op::Glu(_) => "glu",
            Op::Sparsemax(_) => "sparsemax",
            Op::LogSoftmax(_) => "log_softmax",
            Op::SliceCols { .. } => "slice_cols",
            Op::ConcatCols(_) => "concat_cols",
            Op::Gather { .. } => "gather",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::BatchNorm { .. } => "batch_norm",
            Op::Custom { op, .. } => op.name(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Batch-norm hyperparameters shared by every normalization layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchNormSpec {
    pub eps: f64,
    /// Weight of the newest batch statistic in the running average.
    pub momentum: f64,
    /// Ghost-batch chunk size; `None` normalizes the whole batch at once.
    pub virtual_batch: Option<usize>,
}

impl Default for BatchNormSpec {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            momentum: 0.01,
            virtual_batch: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.nodes.iter().map(|n| (n.op.name(), n.value.shape())))
            .finish()
    }
}

/// Gradients from one backward sweep, indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, node: NodeId) -> Option<&Tensor> {
        self.grads[node.0].as_ref()
    }
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Constant, false)
    }

    /// Leaf bound to a stored parameter; gradients reach it only if it is
    /// trainable.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        let p = store.get(id);
        self.push(p.tensor.clone(), Op::Param(id), p.trainable)
    }

    /// Copy of `x` cut off from the tape.
    pub fn detach(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).clone();
        self.constant(v)
    }

    /// `x · w + b` for `x: B×In`, `w: In×Out`, `b: [Out]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (rows, fan_in) = xv.dims2();
        if wv.shape().len() != 2 || wv.shape()[0] != fan_in {
            return Err(Error::dim(
                "linear",
                format!("input {:?} cannot multiply weight {:?}", xv.shape(), wv.shape()),
            ));
        }
        let fan_out = wv.shape()[1];
        let mut out = vec![0.0; rows * fan_out];
        gemm(rows, fan_in, fan_out, xv.data(), false, wv.data(), false, &mut out, false);
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.len() != fan_out {
                return Err(Error::dim(
                    "linear",
                    format!("bias {:?} does not match output width {fan_out}", bv.shape()),
                ));
            }
            for row in out.chunks_mut(fan_out) {
                for (o, bj) in row.iter_mut().zip(bv.data()) {
                    *o += bj;
                }
            }
        }
        let rg = self.rg(&[x, w]) || b.is_some_and(|b| self.rg(&[b]));
        let value = Tensor::matrix(rows, fan_out, out)?;
        Ok(self.push(value, Op::Linear { x, w, b }, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        check_same("add", self.value(a), self.value(b))?;
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        check_same("mul", self.value(a), self.value(b))?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let v = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    /// `scale · x + shift`, elementwise.
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        let v = self.value(x).map(|v| scale * v + shift);
        let rg = self.rg(&[x]);
        self.push(v, Op::Affine { x, scale }, rg)
    }

    pub fn scale(&mut self, x: NodeId, scale: f64) -> NodeId {
        self.affine(x, scale, 0.0)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(&[x]);
        self.push(v, Op::Relu(x), rg)
    }

    /// Gated linear unit: first half of the columns gated by the sigmoid of
    /// the second half.
    pub fn glu(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let (rows, cols) = xv.dims2();
        if cols % 2 != 0 {
            return Err(Error::dim("glu", format!("last dimension {cols} is odd")));
        }
        let half = cols / 2;
        let mut out = Vec::with_capacity(rows * half);
        for r in 0..rows {
            let row = xv.row(r);
            let (a, g) = row.split_at(half);
            out.extend(a.iter().zip(g).map(|(a, g)| a * sigmoid(*g)));
        }
        let v = Tensor::matrix(rows, half, out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::Glu(x), rg))
    }

    pub fn sparsemax(&mut self, x: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        if !xv.all_finite() {
            return Err(Error::NonFinite("sparsemax input is not finite".into()));
        }
        let (rows, cols) = xv.dims2();
        let mut out = vec![0.0; rows * cols];
        for (zr, or) in xv.data().chunks(cols).zip(out.chunks_mut(cols)) {
            sparsemax_row(zr, or);
        }
        let v = Tensor::new(xv.shape().to_vec(), out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::Sparsemax(x), rg))
    }

    /// Row-wise log-softmax, computed with max subtraction.
    pub fn log_softmax(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let cols = xv.cols();
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let v = Tensor::new(xv.shape().to_vec(), out).expect("shape preserved");
        let rg = self.rg(&[x]);
        self.push(v, Op::LogSoftmax(x), rg)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let xv = self.value(x);
        let (rows, cols) = xv.dims2();
        if start >= end || end > cols {
            return Err(Error::dim("slice_cols", format!("range {start}..{end} of {cols} columns")));
        }
        let mut out = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            out.extend_from_slice(&xv.row(r)[start..end]);
        }
        let v = Tensor::matrix(rows, end - start, out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(v, Op::SliceCols { x, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = parts
            .first()
            .map(|&p| self.value(p).rows())
            .ok_or_else(|| Error::dim("concat_cols", "no inputs"))?;
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::dim("concat_cols", "row counts differ"));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let v = Tensor::matrix(rows, total, out)?;
        let rg = self.rg(parts);
        Ok(self.push(v, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Row lookup: `out[b] = table[codes[b]]`.
    pub fn gather(&mut self, table: NodeId, codes: Vec<usize>) -> Result<NodeId> {
        let tv = self.value(table);
        let (n, width) = tv.dims2();
        if let Some(&bad) = codes.iter().find(|&&c| c >= n) {
            return Err(Error::dim("gather", format!("code {bad} outside table of {n} rows")));
        }
        let mut out = Vec::with_capacity(codes.len() * width);
        for &c in &codes {
            out.extend_from_slice(tv.row(c));
        }
        let v = Tensor::matrix(codes.len(), width, out)?;
        let rg = self.rg(&[table]);
        Ok(self.push(v, Op::Gather { table, codes }, rg))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(&[x]);
        self.push(v, Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let v = Tensor::scalar(xv.sum() / xv.len() as f64);
        let rg = self.rg(&[x]);
        self.push(v, Op::Mean(x), rg)
    }

    /// Batch normalization over the rows of `x: B×F`.
    ///
    /// Training mode normalizes each ghost chunk by its own biased mean and
    /// variance and folds those statistics into the running averages, one
    /// chunk at a time. A trailing chunk smaller than the virtual batch is
    /// normalized on its own. Eval mode uses the running averages.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &mut [f64],
        running_var: &mut [f64],
        mode: BnMode,
        spec: &BatchNormSpec,
    ) -> Result<NodeId> {
        let xv = self.value(x);
        let (rows, cols) = xv.dims2();
        for (name, t) in [("gamma", self.value(gamma)), ("beta", self.value(beta))] {
            if t.len() != cols {
                return Err(Error::dim(
                    "batch_norm",
                    format!("{name} {:?} does not match {cols} features", t.shape()),
                ));
            }
        }
        if running_mean.len() != cols || running_var.len() != cols {
            return Err(Error::dim("batch_norm", "running statistics width"));
        }
        let mut x_hat = xv.data().to_vec();
        let (chunk, inv_std) = match mode {
            BnMode::Train => {
                if rows < 2 {
                    return Err(Error::BatchTooSmall { size: rows });
                }
                let chunk = spec.virtual_batch.unwrap_or(rows).clamp(1, rows);
                let mut inv_std = Vec::with_capacity(rows.div_ceil(chunk) * cols);
                for block in x_hat.chunks_mut(chunk * cols) {
                    let n = (block.len() / cols) as f64;
                    let mut mean = vec![0.0; cols];
                    for row in block.chunks(cols) {
                        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
                    }
                    mean.iter_mut().for_each(|m| *m /= n);
                    let mut var = vec![0.0; cols];
                    for row in block.chunks(cols) {
                        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                            *s += (v - m) * (v - m);
                        }
                    }
                    var.iter_mut().for_each(|s| *s /= n);
                    let inv: Vec<f64> = var.iter().map(|s| 1.0 / (s + spec.eps).sqrt()).collect();
                    for row in block.chunks_mut(cols) {
                        for ((v, m), is) in row.iter_mut().zip(&mean).zip(&inv) {
                            *v = (*v - m) * is;
                        }
                    }
                    let m = spec.momentum;
                    for j in 0..cols {
                        running_mean[j] = (1.0 - m) * running_mean[j] + m * mean[j];
                        running_var[j] = (1.0 - m) * running_var[j] + m * var[j];
                    }
                    inv_std.extend(inv);
                }
                (chunk, inv_std)
            }
            BnMode::Eval => {
                let inv: Vec<f64> = running_var.iter().map(|s| 1.0 / (s + spec.eps).sqrt()).collect();
                for row in x_hat.chunks_mut(cols) {
                    for ((v, m), is) in row.iter_mut().zip(running_mean.iter()).zip(&inv) {
                        *v = (*v - m) * is;
                    }
                }
                (rows, inv)
            }
        };
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = x_hat.clone();
        for row in out.chunks_mut(cols) {
            for ((v, g), b) in row.iter_mut().zip(gv).zip(bv) {
                *v = *v * g + b;
            }
        }
        let shape = self.value(x).shape().to_vec();
        let value = Tensor::new(shape.clone(), out)?;
        let x_hat = Tensor::new(shape, x_hat)?;
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                x_hat,
                inv_std,
                chunk,
                train: mode == BnMode::Train,
            },
            rg,
        ))
    }

    /// Appends an operation whose forward value was computed by the caller.
    pub fn custom(&mut self, inputs: &[NodeId], value: Tensor, op: Box<dyn CustomOp>) -> NodeId {
        let rg = self.rg(inputs);
        self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            rg,
        )
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &gy, &mut grads);
            }
            grads[i] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    /// Adds the gradient of every parameter leaf into `store`.
    pub fn accumulate_param_grads(&self, grads: &Gradients, store: &mut ParamStore) {
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(pid), Some(g)) = (&node.op, &grads.grads[i]) {
                store.accumulate_grad(*pid, g);
            }
        }
    }

    /// `backward` followed by `accumulate_param_grads`.
    pub fn backward_into(&self, loss: NodeId, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.backward(loss)?;
        self.accumulate_param_grads(&grads, store);
        Ok(grads)
    }

    fn propagate(&self, node: &Node, gy: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut send = |id: NodeId, g: Tensor| {
            if !self.nodes[id.0].requires_grad {
                return;
            }
            match &mut grads[id.0] {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        };
        let needs = |id: NodeId| self.nodes[id.0].requires_grad;
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (rows, fan_in) = xv.dims2();
                let fan_out = wv.shape()[1];
                if needs(*x) {
                    let mut dx = vec![0.0; rows * fan_in];
                    gemm(rows, fan_out, fan_in, gy.data(), false, wv.data(), true, &mut dx, false);
                    send(*x, Tensor::new(xv.shape().to_vec(), dx).unwrap());
                }
                if needs(*w) {
                    let mut dw = vec![0.0; fan_in * fan_out];
                    gemm(fan_in, rows, fan_out, xv.data(), true, gy.data(), false, &mut dw, false);
                    send(*w, Tensor::new(wv.shape().to_vec(), dw).unwrap());
                }
                if let Some(b) = b.filter(|&b| needs(b)) {
                    let mut db = vec![0.0; fan_out];
                    for row in gy.data().chunks(fan_out) {
                        db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                    }
                    send(b, Tensor::new(self.value(b).shape().to_vec(), db).unwrap());
                }
            }
            Op::Add(a, b) => {
                send(*a, gy.clone());
                send(*b, gy.clone());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if needs(*a) {
                    let d = gy.data().iter().zip(bv.data()).map(|(g, y)| g * y).collect();
                    send(*a, Tensor::new(av.shape().to_vec(), d).unwrap());
                }
                if needs(*b) {
                    let d = gy.data().iter().zip(av.data()).map(|(g, x)| g * x).collect();
                    send(*b, Tensor::new(bv.shape().to_vec(), d).unwrap());
                }
            }
            Op::Affine { x, scale } => send(*x, gy.map(|g| g * scale)),
            Op::Relu(x) => {
                let xv = self.value(*x);
                let d = gy
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                    .collect();
                send(*x, Tensor::new(xv.shape().to_vec(), d).unwrap());
            }
            Op::Glu(x) => {
                let xv = self.value(*x);
                let (rows, cols) = xv.dims2();
                let half = cols / 2;
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    let row = xv.row(r);
                    let gr = gy.row(r);
                    let dr = &mut d[r * cols..(r + 1) * cols];
                    for j in 0..half {
                        let s = sigmoid(row[half + j]);
                        dr[j] = gr[j] * s;
                        dr[half + j] = gr[j] * row[j] * s * (1.0 - s);
                    }
                }
                send(*x, Tensor::new(xv.shape().to_vec(), d).unwrap());
            }
            Op::Sparsemax(x) => {
                let cols = node.value.cols();
                let mut d = vec![0.0; node.value.len()];
                for ((pr, gr), dr) in node
                    .value
                    .data()
                    .chunks(cols)
                    .zip(gy.data().chunks(cols))
                    .zip(d.chunks_mut(cols))
                {
                    sparsemax_row_backward(pr, gr, dr);
                }
                send(*x, Tensor::new(node.value.shape().to_vec(), d).unwrap());
            }
            Op::LogSoftmax(x) => {
                let cols = node.value.cols();
                let mut d = gy.data().to_vec();
                for (dr, yr) in d.chunks_mut(cols).zip(node.value.data().chunks(cols)) {
                    let total: f64 = dr.iter().sum();
                    for (dv, y) in dr.iter_mut().zip(yr) {
                        *dv -= y.exp() * total;
                    }
                }
                send(*x, Tensor::new(node.value.shape().to_vec(), d).unwrap());
            }
            Op::SliceCols { x, start } => {
                let xv = self.value(*x);
                let (rows, cols) = xv.dims2();
                let width = node.value.cols();
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    d[r * cols + start..r * cols + start + width].copy_from_slice(gy.row(r));
                }
                send(*x, Tensor::new(xv.shape().to_vec(), d).unwrap());
            }
            Op::ConcatCols(parts) => {
                let rows = node.value.rows();
                let mut offset = 0;
                for &p in parts {
                    let width = self.value(p).cols();
                    if needs(p) {
                        let mut d = Vec::with_capacity(rows * width);
                        for r in 0..rows {
                            d.extend_from_slice(&gy.row(r)[offset..offset + width]);
                        }
                        send(p, Tensor::new(self.value(p).shape().to_vec(), d).unwrap());
                    }
                    offset += width;
                }
            }
            Op::Gather { table, codes } => {
                let tv = self.value(*table);
                let mut d = Tensor::zeros(tv.shape());
                let width = tv.cols();
                for (r, &c) in codes.iter().enumerate() {
                    let src = gy.row(r);
                    let dst = &mut d.data_mut()[c * width..(c + 1) * width];
                    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
                }
                send(*table, d);
            }
            Op::Sum(x) => {
                let g = gy.data()[0];
                send(*x, Tensor::full(self.value(*x).shape(), g));
            }
            Op::Mean(x) => {
                let xv = self.value(*x);
                let g = gy.data()[0] / xv.len() as f64;
                send(*x, Tensor::full(xv.shape(), g));
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                x_hat,
                inv_std,
                chunk,
                train,
            } => {
                let cols = x_hat.cols();
                let gv = self.value(*gamma).data();
                if needs(*gamma) || needs(*beta) {
                    let mut dg = vec![0.0; cols];
                    let mut db = vec![0.0; cols];
                    for (gr, hr) in gy.data().chunks(cols).zip(x_hat.data().chunks(cols)) {
                        for j in 0..cols {
                            dg[j] += gr[j] * hr[j];
                            db[j] += gr[j];
                        }
                    }
                    send(*gamma, Tensor::new(self.value(*gamma).shape().to_vec(), dg).unwrap());
                    send(*beta, Tensor::new(self.value(*beta).shape().to_vec(), db).unwrap());
                }
                if needs(*x) {
                    let mut dx = vec![0.0; x_hat.len()];
                    if *train {
                        let blocks = gy
                            .data()
                            .chunks(chunk * cols)
                            .zip(x_hat.data().chunks(chunk * cols))
                            .zip(dx.chunks_mut(chunk * cols))
                            .zip(inv_std.chunks(cols));
                        for (((gb, hb), db), is) in blocks {
                            let n = (gb.len() / cols) as f64;
                            let mut sum_g = vec![0.0; cols];
                            let mut sum_gh = vec![0.0; cols];
                            for (gr, hr) in gb.chunks(cols).zip(hb.chunks(cols)) {
                                for j in 0..cols {
                                    let gh = gr[j] * gv[j];
                                    sum_g[j] += gh;
                                    sum_gh[j] += gh * hr[j];
                                }
                            }
                            for ((gr, hr), dr) in gb.chunks(cols).zip(hb.chunks(cols)).zip(db.chunks_mut(cols)) {
                                for j in 0..cols {
                                    let gh = gr[j] * gv[j];
                                    dr[j] = is[j] / n * (n * gh - sum_g[j] - hr[j] * sum_gh[j]);
                                }
                            }
                        }
                    } else {
                        for (gr, dr) in gy.data().chunks(cols).zip(dx.chunks_mut(cols)) {
                            for j in 0..cols {
                                dr[j] = gr[j] * gv[j] * inv_std[j];
                            }
                        }
                    }
                    send(*x, Tensor::new(x_hat.shape().to_vec(), dx).unwrap());
                }
            }
            Op::Custom { inputs, op } => {
                let values: Vec<&Tensor> = inputs.iter().map(|&i| self.value(i)).collect();
                let gs = op.backward(&values, &node.value, gy);
                for (&i, g) in inputs.iter().zip(gs) {
                    send(i, g);
                }
            }
        }
    }
}
