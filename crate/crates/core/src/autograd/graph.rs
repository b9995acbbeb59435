//! Operation graph recorded during the forward pass and replayed in reverse.
//!
//! Nodes are appended in execution order, so every input of node `k` has an
//! index below `k` and reverse index order is a valid reverse topological
//! order. Gradients are accumulated into each node's [`Tensor`] grad buffer.

use super::kernels::{self, ConvGeom};
use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sum(NodeId),
    AddBias {
        x: NodeId,
        bias: NodeId,
    },
    Conv2d {
        x: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        geom: ConvGeom,
    },
    MaxPool2d {
        x: NodeId,
        argmax: Vec<usize>,
    },
    Reshape(NodeId),
    Activation {
        x: NodeId,
        kind: ActivationKind,
        params: Vec<NodeId>,
        per_channel: bool,
    },
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        training: bool,
    },
    GlobalAvgPool(NodeId),
    CrossEntropy {
        logits: NodeId,
        probs: Vec<f64>,
        targets: Vec<Vec<(usize, f64)>>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Sum(..) => "sum",
            Op::AddBias { .. } => "add_bias",
            Op::Conv2d { .. } => "conv2d",
            Op::MaxPool2d { .. } => "maxpool2d",
            Op::Reshape(..) => "reshape",
            Op::Activation { .. } => "activation",
            Op::BatchNorm { .. } => "batch_norm",
            Op::GlobalAvgPool(..) => "global_avg_pool",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _) | Op::Sum(a) | Op::Reshape(a) | Op::GlobalAvgPool(a) => vec![*a],
            Op::AddBias { x, bias } => vec![*x, *bias],
            Op::Conv2d {
                x, kernel, bias, ..
            } => {
                let mut v = vec![*x, *kernel];
                v.extend(bias);
                v
            }
            Op::MaxPool2d { x, .. } => vec![*x],
            Op::Activation { x, params, .. } => {
                let mut v = vec![*x];
                v.extend(params);
                v
            }
            Op::BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Per-channel batch statistics observed by a training-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance.
    pub var: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatchNormMode<'a> {
    Train,
    Eval {
        running_mean: &'a [f64],
        running_var: &'a [f64],
    },
}

#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
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

    /// Adds a constant input; no gradient is tracked for it.
    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t.with_requires_grad(false))
    }

    /// Adds a leaf whose gradient is populated by [`Graph::backward`].
    pub fn param(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t.with_requires_grad(true))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].value.grad()
    }

    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    pub fn inputs_of(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.inputs()
    }

    fn push(&mut self, op: Op, mut value: Tensor) -> NodeId {
        let needs = match &op {
            Op::Leaf => value.requires_grad(),
            other => other
                .inputs()
                .iter()
                .any(|i| self.nodes[i.0].value.requires_grad()),
        };
        value.set_requires_grad(needs);
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn data(&self, id: NodeId) -> &[f64] {
        self.nodes[id.0].value.data()
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!("matmul of {sa:?} by {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::gemm(
            m,
            k,
            n,
            self.data(a),
            false,
            self.data(b),
            false,
            &mut out,
            false,
        );
        let t = Tensor::new(&[m, n], out)?;
        Ok(self.push(Op::MatMul(a, b), t))
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "{what} of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(self.shape(a), data)?;
        Ok(self.push(Op::Add(a, b), t))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x * y)
            .collect();
        let t = Tensor::new(self.shape(a), data)?;
        Ok(self.push(Op::Mul(a, b), t))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let data = self.data(a).iter().map(|x| x * c).collect();
        let t = Tensor::new(self.shape(a), data).expect("same shape");
        self.push(Op::Scale(a, c), t)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.data(a).iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    /// Adds `bias[c]` along dimension 1 of `x` (`[N, C, ...]`).
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        let c = self.data(bias).len();
        if sx.len() < 2 || sx[1] != c {
            return Err(Error::dim(format!("bias of length {c} for input {sx:?}")));
        }
        let inner: usize = sx[2..].iter().product();
        let bias_v = self.data(bias).to_vec();
        let data = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, v)| v + bias_v[(i / inner) % c])
            .collect();
        let t = Tensor::new(&sx, data)?;
        Ok(self.push(Op::AddBias { x, bias }, t))
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        let sk = self.shape(kernel).to_vec();
        if sx.len() != 4 || sk.len() != 4 || sx[1] != sk[1] {
            return Err(Error::dim(format!(
                "conv2d of input {sx:?} with kernel {sk:?}"
            )));
        }
        if stride == 0 {
            return Err(Error::dim("conv2d stride must be positive"));
        }
        let (batch, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        let (f, kh, kw) = (sk[0], sk[2], sk[3]);
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::dim(format!(
                "kernel {kh}x{kw} larger than padded input {}x{} (input {sx:?}, kernel {sk:?})",
                h + 2 * padding,
                w + 2 * padding
            )));
        }
        if let Some(b) = bias {
            if self.shape(b) != [f] {
                return Err(Error::dim(format!(
                    "conv2d bias {:?} for {f} filters",
                    self.shape(b)
                )));
            }
        }
        let geom = ConvGeom {
            channels: c,
            height: h,
            width: w,
            kh,
            kw,
            stride,
            pad: padding,
            out_h: (h + 2 * padding - kh) / stride + 1,
            out_w: (w + 2 * padding - kw) / stride + 1,
        };
        let out = kernels::conv2d_forward(
            self.data(x),
            batch,
            &geom,
            self.data(kernel),
            f,
            bias.map(|b| self.data(b)),
        );
        let t = Tensor::new(&[batch, f, geom.out_h, geom.out_w], out)?;
        Ok(self.push(
            Op::Conv2d {
                x,
                kernel,
                bias,
                geom,
            },
            t,
        ))
    }

    pub fn maxpool2d(&mut self, x: NodeId, window: usize) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 4 || window == 0 || sx[2] % window != 0 || sx[3] % window != 0 {
            return Err(Error::dim(format!(
                "maxpool window {window} does not divide spatial dims of {sx:?}"
            )));
        }
        let (out, argmax) =
            kernels::maxpool2d_forward(self.data(x), sx[0] * sx[1], sx[2], sx[3], window);
        let t = Tensor::new(&[sx[0], sx[1], sx[2] / window, sx[3] / window], out)?;
        Ok(self.push(Op::MaxPool2d { x, argmax }, t))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let t = Tensor::new(self.shape(x), self.data(x).to_vec())?.reshape(shape)?;
        Ok(self.push(Op::Reshape(x), t))
    }

    /// Flattens everything after the batch dimension.
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.shape(x);
        let n = s[0];
        let rest = s[1..].iter().product();
        self.reshape(x, &[n, rest])
    }

    /// Applies `kind` elementwise. Each entry of `params` is one learnable
    /// scalar of shape `[1]`, or `[C]` when `per_channel` is set.
    pub fn activation(
        &mut self,
        x: NodeId,
        kind: ActivationKind,
        params: &[NodeId],
        per_channel: bool,
    ) -> Result<NodeId> {
        if params.len() != kind.num_params() {
            return Err(Error::Contract(format!(
                "`{kind}` takes {} parameters, got {}",
                kind.num_params(),
                params.len()
            )));
        }
        let sx = self.shape(x).to_vec();
        let (channels, inner) = self.channel_layout(&sx, per_channel)?;
        for &p in params {
            if self.data(p).len() != channels {
                return Err(Error::dim(format!(
                    "activation parameter of length {} for {channels} channel(s)",
                    self.data(p).len()
                )));
            }
        }
        let table = self.param_table(params, channels);
        let np = params.len();
        let data = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = (i / inner) % channels;
                kind.eval(v, &table[c * np..(c + 1) * np])
            })
            .collect();
        let t = Tensor::new(&sx, data)?;
        Ok(self.push(
            Op::Activation {
                x,
                kind,
                params: params.to_vec(),
                per_channel,
            },
            t,
        ))
    }

    fn channel_layout(&self, shape: &[usize], per_channel: bool) -> Result<(usize, usize)> {
        if !per_channel {
            let n: usize = shape.iter().product();
            return Ok((1, n));
        }
        if shape.len() < 2 {
            return Err(Error::dim(format!(
                "per-channel activation needs [N, C, ...], got {shape:?}"
            )));
        }
        Ok((shape[1], shape[2..].iter().product()))
    }

    /// Row `c` holds the parameter values used for channel `c`.
    fn param_table(&self, params: &[NodeId], channels: usize) -> Vec<f64> {
        let mut table = Vec::with_capacity(channels * params.len());
        for c in 0..channels {
            table.extend(params.iter().map(|&p| self.data(p)[c]));
        }
        table
    }

    /// Batch normalization over every dimension except 1. In training mode
    /// the returned [`BatchStats`] carry the batch statistics used.
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mode: BatchNormMode<'_>,
    ) -> Result<(NodeId, Option<BatchStats>)> {
        let sx = self.shape(x).to_vec();
        if sx.len() < 2 {
            return Err(Error::dim(format!(
                "batch norm needs [N, C, ...], got {sx:?}"
            )));
        }
        let c = sx[1];
        let inner: usize = sx[2..].iter().product();
        if self.data(gamma).len() != c || self.data(beta).len() != c {
            return Err(Error::dim(format!(
                "batch norm affine params for {c} channels"
            )));
        }
        let count = sx[0] * inner;
        let xd = self.data(x);
        let (mean, var) = match mode {
            BatchNormMode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for (i, chunk) in xd.chunks(inner).enumerate() {
                    mean[i % c] += chunk.iter().sum::<f64>();
                }
                mean.iter_mut().for_each(|m| *m /= count as f64);
                for (i, chunk) in xd.chunks(inner).enumerate() {
                    let m = mean[i % c];
                    var[i % c] += chunk.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
                }
                var.iter_mut().for_each(|v| *v /= count as f64);
                (mean, var)
            }
            BatchNormMode::Eval {
                running_mean,
                running_var,
            } => {
                if running_mean.len() != c || running_var.len() != c {
                    return Err(Error::dim(format!("running stats for {c} channels")));
                }
                (running_mean.to_vec(), running_var.to_vec())
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let (g, b) = (self.data(gamma), self.data(beta));
        let mut xhat = Vec::with_capacity(xd.len());
        let mut out = Vec::with_capacity(xd.len());
        for (i, chunk) in xd.chunks(inner).enumerate() {
            let ch = i % c;
            for v in chunk {
                let h = (v - mean[ch]) * inv_std[ch];
                xhat.push(h);
                out.push(g[ch] * h + b[ch]);
            }
        }
        let training = matches!(mode, BatchNormMode::Train);
        let t = Tensor::new(&sx, out)?;
        let id = self.push(
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                training,
            },
            t,
        );
        Ok((id, training.then_some(BatchStats { mean, var, count })))
    }

    /// Mean over spatial dimensions: `[N, C, H, W] → [N, C]`.
    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 4 {
            return Err(Error::dim(format!(
                "global average pool needs [N, C, H, W], got {sx:?}"
            )));
        }
        let hw = sx[2] * sx[3];
        let data = self
            .data(x)
            .chunks(hw)
            .map(|c| c.iter().sum::<f64>() / hw as f64)
            .collect();
        let t = Tensor::new(&[sx[0], sx[1]], data)?;
        Ok(self.push(Op::GlobalAvgPool(x), t))
    }

    /// Mean softmax cross-entropy of `logits` `[B, K]` against integer labels.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let targets = labels.iter().map(|&l| vec![(l, 1.0)]).collect();
        self.cross_entropy(logits, targets)
    }

    /// `λ·CE(labels_a) + (1−λ)·CE(labels_b)`, the mixup objective.
    pub fn mixup_cross_entropy(
        &mut self,
        logits: NodeId,
        labels_a: &[usize],
        labels_b: &[usize],
        lambda: f64,
    ) -> Result<NodeId> {
        if labels_a.len() != labels_b.len() {
            return Err(Error::dim("mixup label vectors differ in length"));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Contract(format!(
                "mixup lambda {lambda} outside [0, 1]"
            )));
        }
        let targets = labels_a
            .iter()
            .zip(labels_b)
            .map(|(&a, &b)| vec![(a, lambda), (b, 1.0 - lambda)])
            .collect();
        self.cross_entropy(logits, targets)
    }

    fn cross_entropy(&mut self, logits: NodeId, targets: Vec<Vec<(usize, f64)>>) -> Result<NodeId> {
        let sl = self.shape(logits).to_vec();
        if sl.len() != 2 || sl[0] != targets.len() {
            return Err(Error::dim(format!(
                "cross entropy over logits {sl:?} with {} labels",
                targets.len()
            )));
        }
        let (batch, k) = (sl[0], sl[1]);
        for (index, row) in targets.iter().enumerate() {
            if let Some(&(label, _)) = row.iter().find(|(l, _)| *l >= k) {
                return Err(Error::Label {
                    index,
                    label,
                    classes: k,
                });
            }
        }
        let mut probs = Vec::with_capacity(batch * k);
        let mut loss = 0.0;
        for (row, t) in self.data(logits).chunks(k).zip(&targets) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_z = max + sum.ln();
            for &(label, w) in t {
                loss += w * (log_z - row[label]);
            }
            probs.extend(row.iter().map(|v| (v - log_z).exp()));
        }
        let value = Tensor::scalar(loss / batch as f64);
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                probs,
                targets,
            },
            value,
        ))
    }

    /// Reverse-mode sweep from the scalar node `loss`. Gradients accumulate
    /// over fan-out; nodes not requiring grad are skipped.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, node {} has shape {:?}",
                loss.0,
                self.shape(loss)
            )));
        }
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
        if !self.nodes[loss.0].value.requires_grad() {
            return Ok(());
        }
        self.nodes[loss.0].value.accumulate_grad(&[1.0]);
        for k in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(k);
            let node = &rest[0];
            let Some(up) = node.value.grad() else {
                continue;
            };
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let contributions = input_grads(before, node, up);
            for (id, g) in contributions {
                let target = &mut before[id.0].value;
                if target.requires_grad() {
                    target.accumulate_grad(&g);
                }
            }
        }
        Ok(())
    }
}

fn wants(nodes: &[Node], id: NodeId) -> bool {
    nodes[id.0].value.requires_grad()
}

/// Gradient contributions of one node to each of its inputs.
fn input_grads(nodes: &[Node], node: &Node, up: &[f64]) -> Vec<(NodeId, Vec<f64>)> {
    let val = |id: NodeId| &nodes[id.0].value;
    let mut out = Vec::new();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = (val(*a).shape()[0], val(*a).shape()[1]);
            let n = val(*b).shape()[1];
            if wants(nodes, *a) {
                let mut da = vec![0.0; m * k];
                kernels::gemm(m, n, k, up, false, val(*b).data(), true, &mut da, false);
                out.push((*a, da));
            }
            if wants(nodes, *b) {
                let mut db = vec![0.0; k * n];
                kernels::gemm(k, m, n, val(*a).data(), true, up, false, &mut db, false);
                out.push((*b, db));
            }
        }
        Op::Add(a, b) => {
            out.push((*a, up.to_vec()));
            out.push((*b, up.to_vec()));
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a).data(), val(*b).data());
            out.push((*a, up.iter().zip(vb).map(|(g, y)| g * y).collect()));
            out.push((*b, up.iter().zip(va).map(|(g, x)| g * x).collect()));
        }
        Op::Scale(a, c) => out.push((*a, up.iter().map(|g| g * c).collect())),
        Op::Sum(a) => out.push((*a, vec![up[0]; val(*a).len()])),
        Op::AddBias { x, bias } => {
            let s = val(*x).shape();
            let c = s[1];
            let inner: usize = s[2..].iter().product();
            let mut db = vec![0.0; c];
            for (i, chunk) in up.chunks(inner).enumerate() {
                db[i % c] += chunk.iter().sum::<f64>();
            }
            out.push((*x, up.to_vec()));
            out.push((*bias, db));
        }
        Op::Conv2d {
            x,
            kernel,
            bias,
            geom,
        } => {
            let batch = val(*x).shape()[0];
            let filters = val(*kernel).shape()[0];
            let g = kernels::conv2d_backward(
                val(*x).data(),
                batch,
                geom,
                val(*kernel).data(),
                filters,
                up,
                wants(nodes, *x),
                wants(nodes, *kernel),
                bias.is_some_and(|b| wants(nodes, b)),
            );
            if let Some(d) = g.input {
                out.push((*x, d));
            }
            if let Some(d) = g.kernel {
                out.push((*kernel, d));
            }
            if let (Some(b), Some(d)) = (bias, g.bias) {
                out.push((*b, d));
            }
        }
        Op::MaxPool2d { x, argmax } => {
            let mut dx = vec![0.0; val(*x).len()];
            for (g, &idx) in up.iter().zip(argmax) {
                dx[idx] += g;
            }
            out.push((*x, dx));
        }
        Op::Reshape(x) => out.push((*x, up.to_vec())),
        Op::Activation {
            x,
            kind,
            params,
            per_channel,
        } => {
            let s = val(*x).shape();
            let (channels, inner) = if *per_channel {
                (s[1], s[2..].iter().product())
            } else {
                (1, val(*x).len())
            };
            let np = params.len();
            let mut table = Vec::with_capacity(channels * np);
            for c in 0..channels {
                table.extend(params.iter().map(|&p| val(p).data()[c]));
            }
            let mut dparams = vec![vec![0.0; channels]; np];
            let mut local = vec![0.0; np];
            let dx = val(*x)
                .data()
                .iter()
                .zip(up)
                .enumerate()
                .map(|(i, (&xi, &gi))| {
                    let c = (i / inner) % channels;
                    let d = kind.grad(xi, &table[c * np..(c + 1) * np], &mut local);
                    for (dp, l) in dparams.iter_mut().zip(&local) {
                        dp[c] += gi * l;
                    }
                    gi * d
                })
                .collect();
            out.push((*x, dx));
            out.extend(params.iter().copied().zip(dparams));
        }
        Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            training,
        } => {
            let s = val(*x).shape();
            let c = s[1];
            let inner: usize = s[2..].iter().product();
            let count = (s[0] * inner) as f64;
            let gv = val(*gamma).data();
            let mut dgamma = vec![0.0; c];
            let mut dbeta = vec![0.0; c];
            for (i, (uc, hc)) in up.chunks(inner).zip(xhat.chunks(inner)).enumerate() {
                let ch = i % c;
                dbeta[ch] += uc.iter().sum::<f64>();
                dgamma[ch] += uc.iter().zip(hc).map(|(u, h)| u * h).sum::<f64>();
            }
            let dx = if *training {
                let mut dx = Vec::with_capacity(up.len());
                for (i, (uc, hc)) in up.chunks(inner).zip(xhat.chunks(inner)).enumerate() {
                    let ch = i % c;
                    let scale = gv[ch] * inv_std[ch] / count;
                    dx.extend(
                        uc.iter()
                            .zip(hc)
                            .map(|(u, h)| scale * (count * u - dbeta[ch] - h * dgamma[ch])),
                    );
                }
                dx
            } else {
                up.chunks(inner)
                    .enumerate()
                    .flat_map(|(i, uc)| {
                        let ch = i % c;
                        uc.iter().map(move |u| u * gv[ch] * inv_std[ch])
                    })
                    .collect()
            };
            out.push((*x, dx));
            out.push((*gamma, dgamma));
            out.push((*beta, dbeta));
        }
        Op::GlobalAvgPool(x) => {
            let s = val(*x).shape();
            let hw = s[2] * s[3];
            let dx = up
                .iter()
                .flat_map(|g| std::iter::repeat_n(g / hw as f64, hw))
                .collect();
            out.push((*x, dx));
        }
        Op::CrossEntropy {
            logits,
            probs,
            targets,
        } => {
            let k = val(*logits).shape()[1];
            let batch = targets.len() as f64;
            let scale = up[0] / batch;
            let mut d: Vec<f64> = probs.iter().map(|p| p * scale).collect();
            for (r, row) in targets.iter().enumerate() {
                let total: f64 = row.iter().map(|(_, w)| w).sum();
                if total != 1.0 {
                    for v in &mut d[r * k..(r + 1) * k] {
                        *v *= total;
                    }
                }
                for &(label, w) in row {
                    d[r * k + label] -= w * scale;
                }
            }
            out.push((*logits, d));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_fan_out() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        g.backward(x).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0]);

        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.add(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn inputs_precede_consumers() {
        let mut g = Graph::new();
        let a = g.param(Tensor::from_rows(&[&[1.0, 2.0]]));
        let b = g.input(Tensor::from_rows(&[&[3.0], &[4.0]]));
        let c = g.matmul(a, b).unwrap();
        let s = g.sum(c);
        for id in [a, b, c, s] {
            assert!(g.inputs_of(id).iter().all(|i| i.index() < id.index()));
        }
        assert_eq!(g.value(c).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.input(Tensor::zeros(&[2, 3]));
        let b = g.input(Tensor::zeros(&[2, 3]));
        let msg = g.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn label_out_of_range() {
        let mut g = Graph::new();
        let l = g.input(Tensor::zeros(&[2, 3]));
        let err = g.softmax_cross_entropy(l, &[0, 3]).unwrap_err();
        assert!(matches!(
            err,
            Error::Label {
                index: 1,
                label: 3,
                classes: 3
            }
        ));
    }

    #[test]
    fn constant_inputs_get_no_grad() {
        let mut g = Graph::new();
        let x = g.input(Tensor::scalar(2.0));
        let w = g.param(Tensor::scalar(5.0));
        let y = g.mul(x, w).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[2.0]);
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn backward_twice_does_not_double_count() {
        let mut g = Graph::new();
        let w = g.param(Tensor::scalar(5.0));
        let y = g.scale(w, 3.0);
        g.backward(y).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[3.0]);
    }
}
