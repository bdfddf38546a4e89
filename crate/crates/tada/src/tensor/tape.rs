//! Gradient tape: ops are recorded in creation order during the forward pass
//! and replayed strictly in reverse for the backward pass. Ops can only refer
//! to earlier nodes, so reverse creation order is a reverse topological order
//! by construction. A tape lives for one training step; dropping it clears
//! every recorded value and gradient, so nothing leaks across steps.

use super::kernels as k;
use super::{shapes_equal, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddScalar(NodeId),
    Scale(NodeId, f64),
    AddBias(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Relu(NodeId),
    Gelu(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId, usize),
    LayerNorm {
        input: NodeId,
        stats: Vec<(f64, f64)>, // (mean, rstd) per row
    },
    Mean(NodeId, usize),
    Sum(NodeId),
    Concat(NodeId, NodeId, usize),
    SliceRows(NodeId, usize),
    SliceCols(NodeId, usize),
    Transpose(NodeId),
    GatherRows(NodeId, Vec<usize>),
    L2Norm(NodeId),
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
}

struct Node {
    data: Vec<f64>,
    shape: Vec<usize>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    op: Op,
}

/// Records primitive ops with the inputs their backward rules need.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    /// Register a tensor as a leaf; copies its data onto the tape.
    pub fn leaf(&mut self, t: &Tensor) -> NodeId {
        self.push(t.data.clone(), t.shape.clone(), t.requires_grad, Op::Leaf)
    }

    /// Register raw values as a non-trainable leaf.
    pub fn constant(&mut self, data: Vec<f64>, shape: Vec<usize>) -> Result<NodeId, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::InvalidShape {
                op: "constant",
                shape,
                msg: format!("shape product does not match data length {}", data.len()),
            });
        }
        Ok(self.push(data, shape, false, Op::Leaf))
    }

    pub fn scalar_const(&mut self, v: f64) -> NodeId {
        self.push(vec![v], vec![], false, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Scalar node's value.
    pub fn item(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].data.len(), 1);
        self.nodes[id.0].data[0]
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Add the node's gradient into a parameter tensor's grad buffer.
    pub fn export_grad(&self, id: NodeId, param: &mut Tensor) {
        if let Some(g) = self.grad(id) {
            param.accumulate_grad(g);
        }
    }

    fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, op: Op) -> NodeId {
        self.nodes.push(Node {
            data,
            shape,
            requires_grad,
            grad: None,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn dims2(&self, id: NodeId, op: &'static str) -> Result<(usize, usize), TensorError> {
        let s = &self.nodes[id.0].shape;
        if s.len() != 2 {
            return Err(TensorError::InvalidShape {
                op,
                shape: s.clone(),
                msg: "expected a rank-2 tensor".into(),
            });
        }
        Ok((s[0], s[1]))
    }

    // ── elementwise and scalar ops ──────────────────────────────────────

    fn binary_same_shape(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId, TensorError> {
        if !shapes_equal(&self.nodes[a.0].shape, &self.nodes[b.0].shape) {
            return Err(TensorError::ShapeMismatch {
                op: op_name,
                lhs: self.nodes[a.0].shape.clone(),
                rhs: self.nodes[b.0].shape.clone(),
            });
        }
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(data, shape, rg, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.binary_same_shape("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.binary_same_shape("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.binary_same_shape("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let data: Vec<f64> = self.nodes[a.0].data.iter().map(|&x| x + c).collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.needs_grad(&[a]);
        self.push(data, shape, rg, Op::AddScalar(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let data: Vec<f64> = self.nodes[a.0].data.iter().map(|&x| x * c).collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.needs_grad(&[a]);
        self.push(data, shape, rg, Op::Scale(a, c))
    }

    /// Rows of `a` plus vector `b`: [m,n] + [n] -> [m,n].
    pub fn add_bias(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (m, n) = self.dims2(a, "add_bias")?;
        if self.nodes[b.0].shape != [n] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                lhs: self.nodes[a.0].shape.clone(),
                rhs: self.nodes[b.0].shape.clone(),
            });
        }
        let mut data = self.nodes[a.0].data.clone();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += self.nodes[b.0].data[j];
            }
        }
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(data, vec![m, n], rg, Op::AddBias(a, b)))
    }

    /// Rows of `a` times vector `b` elementwise: [m,n] * [n] -> [m,n].
    pub fn mul_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (m, n) = self.dims2(a, "mul_row")?;
        if self.nodes[b.0].shape != [n] {
            return Err(TensorError::ShapeMismatch {
                op: "mul_row",
                lhs: self.nodes[a.0].shape.clone(),
                rhs: self.nodes[b.0].shape.clone(),
            });
        }
        let mut data = self.nodes[a.0].data.clone();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] *= self.nodes[b.0].data[j];
            }
        }
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(data, vec![m, n], rg, Op::MulRow(a, b)))
    }

    // ── nonlinearities ──────────────────────────────────────────────────

    fn unary(
        &mut self,
        a: NodeId,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> NodeId {
        let data: Vec<f64> = self.nodes[a.0].data.iter().map(|&x| f(x)).collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.needs_grad(&[a]);
        self.push(data, shape, rg, op)
    }

    /// max(0, x); the subgradient at exactly 0 is taken as 0.
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, k::gelu, Op::Gelu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, k::sigmoid, Op::Sigmoid(a))
    }

    // ── structured ops ──────────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (m, ka) = self.dims2(a, "matmul")?;
        let (kb, n) = self.dims2(b, "matmul")?;
        if ka != kb {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.nodes[a.0].shape.clone(),
                rhs: self.nodes[b.0].shape.clone(),
            });
        }
        let mut data = vec![0.0; m * n];
        k::matmul(&self.nodes[a.0].data, &self.nodes[b.0].data, m, ka, n, &mut data);
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(data, vec![m, n], rg, Op::Matmul(a, b)))
    }

    /// Softmax along `axis` of a rank-1 or rank-2 tensor.
    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId, TensorError> {
        let shape = self.nodes[a.0].shape.clone();
        match (shape.len(), axis) {
            (1, 0) => {
                let mut data = self.nodes[a.0].data.clone();
                k::softmax_slice(&mut data);
                let rg = self.needs_grad(&[a]);
                Ok(self.push(data, shape, rg, Op::Softmax(a, 0)))
            }
            (2, 0) | (2, 1) => {
                let (m, n) = (shape[0], shape[1]);
                let mut data = self.nodes[a.0].data.clone();
                if axis == 1 {
                    for i in 0..m {
                        k::softmax_slice(&mut data[i * n..(i + 1) * n]);
                    }
                } else {
                    for j in 0..n {
                        let mut col: Vec<f64> = (0..m).map(|i| data[i * n + j]).collect();
                        k::softmax_slice(&mut col);
                        for i in 0..m {
                            data[i * n + j] = col[i];
                        }
                    }
                }
                let rg = self.needs_grad(&[a]);
                Ok(self.push(data, shape, rg, Op::Softmax(a, axis)))
            }
            _ => Err(TensorError::InvalidShape {
                op: "softmax",
                shape,
                msg: format!("axis {axis} out of range"),
            }),
        }
    }

    /// Per-row layer norm of a rank-2 tensor: (x - mean) / sqrt(var + eps).
    /// Scale and shift are applied separately via `mul_row` / `add_bias`.
    pub fn layer_norm(&mut self, a: NodeId, eps: f64) -> Result<NodeId, TensorError> {
        let (m, n) = self.dims2(a, "layer_norm")?;
        let mut data = self.nodes[a.0].data.clone();
        let mut stats = Vec::with_capacity(m);
        for i in 0..m {
            let row = &mut data[i * n..(i + 1) * n];
            let (mean, rstd) = k::row_norm_stats(row, eps);
            for v in row.iter_mut() {
                *v = (*v - mean) * rstd;
            }
            stats.push((mean, rstd));
        }
        let rg = self.needs_grad(&[a]);
        Ok(self.push(data, vec![m, n], rg, Op::LayerNorm { input: a, stats }))
    }

    /// Mean along `axis`: rank-2 [m,n] -> axis 0 gives [n], axis 1 gives [m];
    /// rank-1 with axis 0 gives a scalar.
    pub fn mean(&mut self, a: NodeId, axis: usize) -> Result<NodeId, TensorError> {
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.needs_grad(&[a]);
        match (shape.len(), axis) {
            (1, 0) => {
                let n = shape[0] as f64;
                let v = self.nodes[a.0].data.iter().sum::<f64>() / n;
                Ok(self.push(vec![v], vec![], rg, Op::Mean(a, 0)))
            }
            (2, 0) => {
                let (m, n) = (shape[0], shape[1]);
                let mut out = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        out[j] += self.nodes[a.0].data[i * n + j];
                    }
                }
                for v in out.iter_mut() {
                    *v /= m as f64;
                }
                Ok(self.push(out, vec![n], rg, Op::Mean(a, 0)))
            }
            (2, 1) => {
                let (m, n) = (shape[0], shape[1]);
                let mut out = vec![0.0; m];
                for i in 0..m {
                    out[i] = self.nodes[a.0].data[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64;
                }
                Ok(self.push(out, vec![m], rg, Op::Mean(a, 1)))
            }
            _ => Err(TensorError::InvalidShape {
                op: "mean",
                shape,
                msg: format!("axis {axis} out of range"),
            }),
        }
    }

    /// Full reduction to a scalar.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].data.iter().sum::<f64>();
        let rg = self.needs_grad(&[a]);
        self.push(vec![v], vec![], rg, Op::Sum(a))
    }

    /// Concatenate two rank-2 tensors along `axis`.
    pub fn concat(&mut self, a: NodeId, b: NodeId, axis: usize) -> Result<NodeId, TensorError> {
        let (ma, na) = self.dims2(a, "concat")?;
        let (mb, nb) = self.dims2(b, "concat")?;
        let rg = self.needs_grad(&[a, b]);
        match axis {
            0 => {
                if na != nb {
                    return Err(TensorError::ShapeMismatch {
                        op: "concat",
                        lhs: vec![ma, na],
                        rhs: vec![mb, nb],
                    });
                }
                let mut data = self.nodes[a.0].data.clone();
                data.extend_from_slice(&self.nodes[b.0].data);
                Ok(self.push(data, vec![ma + mb, na], rg, Op::Concat(a, b, 0)))
            }
            1 => {
                if ma != mb {
                    return Err(TensorError::ShapeMismatch {
                        op: "concat",
                        lhs: vec![ma, na],
                        rhs: vec![mb, nb],
                    });
                }
                let mut data = Vec::with_capacity(ma * (na + nb));
                for i in 0..ma {
                    data.extend_from_slice(&self.nodes[a.0].data[i * na..(i + 1) * na]);
                    data.extend_from_slice(&self.nodes[b.0].data[i * nb..(i + 1) * nb]);
                }
                Ok(self.push(data, vec![ma, na + nb], rg, Op::Concat(a, b, 1)))
            }
            _ => Err(TensorError::InvalidShape {
                op: "concat",
                shape: vec![ma, na],
                msg: format!("axis {axis} out of range"),
            }),
        }
    }

    /// Rows [start, end) of a rank-2 tensor.
    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId, TensorError> {
        let (m, n) = self.dims2(a, "slice_rows")?;
        if start >= end || end > m {
            return Err(TensorError::InvalidShape {
                op: "slice_rows",
                shape: vec![m, n],
                msg: format!("row range {start}..{end} out of bounds"),
            });
        }
        let data = self.nodes[a.0].data[start * n..end * n].to_vec();
        let rg = self.needs_grad(&[a]);
        Ok(self.push(data, vec![end - start, n], rg, Op::SliceRows(a, start)))
    }

    /// Columns [start, end) of a rank-2 tensor.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId, TensorError> {
        let (m, n) = self.dims2(a, "slice_cols")?;
        if start >= end || end > n {
            return Err(TensorError::InvalidShape {
                op: "slice_cols",
                shape: vec![m, n],
                msg: format!("column range {start}..{end} out of bounds"),
            });
        }
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for i in 0..m {
            data.extend_from_slice(&self.nodes[a.0].data[i * n + start..i * n + end]);
        }
        let rg = self.needs_grad(&[a]);
        Ok(self.push(data, vec![m, w], rg, Op::SliceCols(a, start)))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let (m, n) = self.dims2(a, "transpose")?;
        let mut data = vec![0.0; m * n];
        k::transpose(&self.nodes[a.0].data, m, n, &mut data);
        let rg = self.needs_grad(&[a]);
        Ok(self.push(data, vec![n, m], rg, Op::Transpose(a)))
    }

    /// Select rows of `a` by index; duplicate indices accumulate additively
    /// in backward. Also serves as embedding lookup on an embedding table.
    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId, TensorError> {
        let (m, n) = self.dims2(a, "gather_rows")?;
        for &ix in indices {
            if ix >= m {
                return Err(TensorError::InvalidShape {
                    op: "gather_rows",
                    shape: vec![m, n],
                    msg: format!("row index {ix} out of bounds"),
                });
            }
        }
        let mut data = Vec::with_capacity(indices.len() * n);
        for &ix in indices {
            data.extend_from_slice(&self.nodes[a.0].data[ix * n..(ix + 1) * n]);
        }
        let rg = self.needs_grad(&[a]);
        Ok(self.push(
            data,
            vec![indices.len(), n],
            rg,
            Op::GatherRows(a, indices.to_vec()),
        ))
    }

    pub fn embedding_lookup(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId, TensorError> {
        self.gather_rows(table, ids)
    }

    /// Euclidean norm of all entries -> scalar. The subgradient at the zero
    /// vector is taken as 0.
    pub fn l2_norm(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].data.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rg = self.needs_grad(&[a]);
        self.push(vec![v], vec![], rg, Op::L2Norm(a))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits` [m, c] -> scalar; computed via logsumexp for stability.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId, TensorError> {
        let (m, c) = self.dims2(logits, "cross_entropy")?;
        if targets.len() != m {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: vec![m, c],
                rhs: vec![targets.len()],
            });
        }
        let mut probs = vec![0.0; m * c];
        let mut total = 0.0;
        for i in 0..m {
            let t = targets[i];
            if t >= c {
                return Err(TensorError::InvalidShape {
                    op: "cross_entropy",
                    shape: vec![m, c],
                    msg: format!("target {t} out of range"),
                });
            }
            let row = &self.nodes[logits.0].data[i * c..(i + 1) * c];
            let lse = k::logsumexp_slice(row);
            total += lse - row[t];
            let prow = &mut probs[i * c..(i + 1) * c];
            for (p, &x) in prow.iter_mut().zip(row) {
                *p = (x - lse).exp();
            }
        }
        let rg = self.needs_grad(&[logits]);
        Ok(self.push(
            vec![total / m as f64],
            vec![],
            rg,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss: seeds d(loss)/d(loss) = 1 and
    /// accumulates gradients into every requires-grad node. Node gradients
    /// are reset first, so a repeated call recomputes rather than doubles.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), TensorError> {
        if self.nodes.is_empty() {
            return Err(TensorError::InvalidShape {
                op: "backward",
                shape: vec![],
                msg: "tape is empty".into(),
            });
        }
        if !self.nodes[loss.0].shape.is_empty() {
            return Err(TensorError::NonScalarLoss {
                shape: self.nodes[loss.0].shape.clone(),
            });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let g = match self.nodes[i].grad.take() {
                Some(g) => g,
                None => continue,
            };
            self.step_backward(i, &g);
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    fn accum(&mut self, id: NodeId, contrib: &[f64]) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let len = self.nodes[id.0].data.len();
        let grad = self.nodes[id.0].grad.get_or_insert_with(|| vec![0.0; len]);
        for (dst, src) in grad.iter_mut().zip(contrib) {
            *dst += *src;
        }
    }

    #[allow(clippy::too_many_lines)]
    fn step_backward(&mut self, i: usize, g: &[f64]) {
        // Ops are immutable once recorded; take a raw view to read input data
        // while accumulating into (strictly earlier) input nodes.
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                self.accum(a, g);
                self.accum(b, g);
            }
            Op::Sub(a, b) => {
                let (a, b) = (*a, *b);
                self.accum(a, g);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                self.accum(b, &neg);
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let da: Vec<f64> = g
                    .iter()
                    .zip(&self.nodes[b.0].data)
                    .map(|(&gv, &bv)| gv * bv)
                    .collect();
                let db: Vec<f64> = g
                    .iter()
                    .zip(&self.nodes[a.0].data)
                    .map(|(&gv, &av)| gv * av)
                    .collect();
                self.accum(a, &da);
                self.accum(b, &db);
            }
            Op::AddScalar(a) => {
                let a = *a;
                self.accum(a, g);
            }
            Op::Scale(a, c) => {
                let (a, c) = (*a, *c);
                let da: Vec<f64> = g.iter().map(|&gv| gv * c).collect();
                self.accum(a, &da);
            }
            Op::AddBias(a, b) => {
                let (a, b) = (*a, *b);
                let n = self.nodes[b.0].data.len();
                let m = g.len() / n;
                self.accum(a, g);
                let mut db = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        db[j] += g[i * n + j];
                    }
                }
                self.accum(b, &db);
            }
            Op::MulRow(a, b) => {
                let (a, b) = (*a, *b);
                let n = self.nodes[b.0].data.len();
                let m = g.len() / n;
                let mut da = vec![0.0; m * n];
                let mut db = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        da[i * n + j] = g[i * n + j] * self.nodes[b.0].data[j];
                        db[j] += g[i * n + j] * self.nodes[a.0].data[i * n + j];
                    }
                }
                self.accum(a, &da);
                self.accum(b, &db);
            }
            Op::Relu(a) => {
                let a = *a;
                let da: Vec<f64> = g
                    .iter()
                    .zip(&self.nodes[a.0].data)
                    .map(|(&gv, &x)| if x > 0.0 { gv } else { 0.0 })
                    .collect();
                self.accum(a, &da);
            }
            Op::Gelu(a) => {
                let a = *a;
                let da: Vec<f64> = g
                    .iter()
                    .zip(&self.nodes[a.0].data)
                    .map(|(&gv, &x)| gv * k::gelu_grad(x))
                    .collect();
                self.accum(a, &da);
            }
            Op::Sigmoid(a) => {
                let a = *a;
                let da: Vec<f64> = g
                    .iter()
                    .zip(&self.nodes[i].data)
                    .map(|(&gv, &s)| gv * s * (1.0 - s))
                    .collect();
                self.accum(a, &da);
            }
            Op::Matmul(a, b) => {
                let (a, b) = (*a, *b);
                let m = self.nodes[a.0].shape[0];
                let kk = self.nodes[a.0].shape[1];
                let n = self.nodes[b.0].shape[1];
                let mut da = vec![0.0; m * kk];
                k::matmul_nt(g, &self.nodes[b.0].data, m, n, kk, &mut da);
                let mut db = vec![0.0; kk * n];
                k::matmul_tn(&self.nodes[a.0].data, g, m, kk, n, &mut db);
                self.accum(a, &da);
                self.accum(b, &db);
            }
            Op::Softmax(a, axis) => {
                let (a, axis) = (*a, *axis);
                let s = &self.nodes[i].data;
                let shape = &self.nodes[i].shape;
                let mut da = vec![0.0; s.len()];
                if shape.len() == 1 || axis == 1 {
                    let n = *shape.last().unwrap();
                    let m = s.len() / n;
                    for r in 0..m {
                        let srow = &s[r * n..(r + 1) * n];
                        let grow = &g[r * n..(r + 1) * n];
                        let dot: f64 = srow.iter().zip(grow).map(|(&sv, &gv)| sv * gv).sum();
                        for j in 0..n {
                            da[r * n + j] = srow[j] * (grow[j] - dot);
                        }
                    }
                } else {
                    let (m, n) = (shape[0], shape[1]);
                    for c in 0..n {
                        let mut dot = 0.0;
                        for r in 0..m {
                            dot += s[r * n + c] * g[r * n + c];
                        }
                        for r in 0..m {
                            da[r * n + c] = s[r * n + c] * (g[r * n + c] - dot);
                        }
                    }
                }
                self.accum(a, &da);
            }
            Op::LayerNorm { input, stats } => {
                let input = *input;
                let stats = stats.clone();
                let y = &self.nodes[i].data;
                let n = self.nodes[i].shape[1];
                let m = self.nodes[i].shape[0];
                let mut da = vec![0.0; m * n];
                for r in 0..m {
                    let (_, rstd) = stats[r];
                    let yrow = &y[r * n..(r + 1) * n];
                    let grow = &g[r * n..(r + 1) * n];
                    let gmean = grow.iter().sum::<f64>() / n as f64;
                    let gydot = grow
                        .iter()
                        .zip(yrow)
                        .map(|(&gv, &yv)| gv * yv)
                        .sum::<f64>()
                        / n as f64;
                    for j in 0..n {
                        da[r * n + j] = rstd * (grow[j] - gmean - yrow[j] * gydot);
                    }
                }
                self.accum(input, &da);
            }
            Op::Mean(a, axis) => {
                let (a, axis) = (*a, *axis);
                let in_shape = self.nodes[a.0].shape.clone();
                let mut da = vec![0.0; self.nodes[a.0].data.len()];
                match (in_shape.len(), axis) {
                    (1, 0) => {
                        let n = in_shape[0] as f64;
                        for v in da.iter_mut() {
                            *v = g[0] / n;
                        }
                    }
                    (2, 0) => {
                        let (m, n) = (in_shape[0], in_shape[1]);
                        for r in 0..m {
                            for j in 0..n {
                                da[r * n + j] = g[j] / m as f64;
                            }
                        }
                    }
                    (2, 1) => {
                        let (m, n) = (in_shape[0], in_shape[1]);
                        for r in 0..m {
                            for j in 0..n {
                                da[r * n + j] = g[r] / n as f64;
                            }
                        }
                    }
                    _ => unreachable!("validated at forward"),
                }
                self.accum(a, &da);
            }
            Op::Sum(a) => {
                let a = *a;
                let da = vec![g[0]; self.nodes[a.0].data.len()];
                self.accum(a, &da);
            }
            Op::Concat(a, b, axis) => {
                let (a, b, axis) = (*a, *b, *axis);
                let sa = self.nodes[a.0].shape.clone();
                let sb = self.nodes[b.0].shape.clone();
                if axis == 0 {
                    let split = sa[0] * sa[1];
                    self.accum(a, &g[..split]);
                    self.accum(b, &g[split..]);
                } else {
                    let (m, na, nb) = (sa[0], sa[1], sb[1]);
                    let mut da = vec![0.0; m * na];
                    let mut db = vec![0.0; m * nb];
                    for r in 0..m {
                        let grow = &g[r * (na + nb)..(r + 1) * (na + nb)];
                        da[r * na..(r + 1) * na].copy_from_slice(&grow[..na]);
                        db[r * nb..(r + 1) * nb].copy_from_slice(&grow[na..]);
                    }
                    self.accum(a, &da);
                    self.accum(b, &db);
                }
            }
            Op::SliceRows(a, start) => {
                let (a, start) = (*a, *start);
                let n = self.nodes[a.0].shape[1];
                let mut da = vec![0.0; self.nodes[a.0].data.len()];
                da[start * n..start * n + g.len()].copy_from_slice(g);
                self.accum(a, &da);
            }
            Op::SliceCols(a, start) => {
                let (a, start) = (*a, *start);
                let (m, n) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let w = g.len() / m;
                let mut da = vec![0.0; m * n];
                for r in 0..m {
                    for j in 0..w {
                        da[r * n + start + j] = g[r * w + j];
                    }
                }
                self.accum(a, &da);
            }
            Op::Transpose(a) => {
                let a = *a;
                let (m, n) = (self.nodes[i].shape[0], self.nodes[i].shape[1]);
                let mut da = vec![0.0; m * n];
                k::transpose(g, m, n, &mut da);
                self.accum(a, &da);
            }
            Op::GatherRows(a, indices) => {
                let a = *a;
                let indices = indices.clone();
                let n = self.nodes[a.0].shape[1];
                let mut da = vec![0.0; self.nodes[a.0].data.len()];
                for (r, &ix) in indices.iter().enumerate() {
                    for j in 0..n {
                        da[ix * n + j] += g[r * n + j];
                    }
                }
                self.accum(a, &da);
            }
            Op::L2Norm(a) => {
                let a = *a;
                let norm = self.nodes[i].data[0];
                let da: Vec<f64> = if norm == 0.0 {
                    vec![0.0; self.nodes[a.0].data.len()]
                } else {
                    self.nodes[a.0]
                        .data
                        .iter()
                        .map(|&x| g[0] * x / norm)
                        .collect()
                };
                self.accum(a, &da);
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let logits = *logits;
                let m = targets.len();
                let c = probs.len() / m;
                let mut da = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    da[r * c + t] -= 1.0;
                }
                let scale = g[0] / m as f64;
                for v in da.iter_mut() {
                    *v *= scale;
                }
                self.accum(logits, &da);
            }
        }
    }
}
