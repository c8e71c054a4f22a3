//! Reverse-mode automatic differentiation over a recorded tape.
//!
//! Operations append nodes to an append-only tape; each node owns its output
//! tensor and references earlier nodes by id, so topological order holds by
//! construction. `backward` walks the tape once in reverse insertion order
//! and accumulates gradients for every node reached from the scalar output.
//!
//! The op catalog is deliberately small: matmul, transpose, add (same shape
//! or matrix + row-vector bias), subtract, hadamard, scalar scale/offset,
//! sigmoid, tanh, exp, log, sum, mean, squared-error reductions, clamp,
//! column slice, row gather, fused softmax cross-entropy, and detach. All
//! other shape combinations are errors; there is no silent broadcasting.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Matmul { a: NodeId, b: NodeId },
    Transpose { x: NodeId },
    Add { a: NodeId, b: NodeId },
    AddRowBias { m: NodeId, bias: NodeId },
    Sub { a: NodeId, b: NodeId },
    Hadamard { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    AddScalar { x: NodeId },
    Sigmoid { x: NodeId },
    Tanh { x: NodeId },
    Exp { x: NodeId },
    Log { x: NodeId },
    Sum { x: NodeId },
    Mean { x: NodeId },
    SqErrMean { a: NodeId, b: NodeId },
    SqErrSum { a: NodeId, b: NodeId },
    Clamp { x: NodeId, lo: f64, hi: f64 },
    SliceCols { x: NodeId, start: usize, len: usize },
    GatherRows { table: NodeId, idx: Vec<usize> },
    SoftmaxXent { logits: NodeId, labels: Vec<usize> },
    Detach { x: NodeId },
}

struct Node {
    op: Op,
    out: Tensor,
    /// Locals saved by the forward pass for ops whose backward would
    /// otherwise recompute something expensive (softmax probabilities).
    saved: Option<Tensor>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Row-major matmul C[m,n] = A[m,k] * B[k,n].
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av != 0.0 {
                let b_row = &b[p * n..(p + 1) * n];
                for (cv, bv) in c_row.iter_mut().zip(b_row) {
                    *cv += av * bv;
                }
            }
        }
    }
    c
}

/// C[m,k] = A[m,n] * B[k,n]^T  (dot products of contiguous rows).
fn matmul_bt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * k];
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            c[i * k + p] = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    }
    c
}

/// C[k,n] = A[m,k]^T * B[m,n].
fn matmul_at(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av != 0.0 {
                let c_row = &mut c[p * n..(p + 1) * n];
                for (cv, bv) in c_row.iter_mut().zip(b_row) {
                    *cv += av * bv;
                }
            }
        }
    }
    c
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].out
    }

    fn push(&mut self, op: Op, out: Tensor) -> NodeId {
        self.nodes.push(Node {
            op,
            out,
            saved: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Record an input tensor. Leaves are where gradients are collected.
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].out, &self.nodes[b.0].out);
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let data = matmul_raw(ta.data(), tb.data(), m, k, n);
        let out = Tensor::new(vec![m, n], data)?;
        Ok(self.push(Op::Matmul { a, b }, out))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let t = &self.nodes[x.0].out;
        if t.rank() != 2 {
            return Err(Error::Contract(format!(
                "transpose needs a 2-d tensor, got {:?}",
                t.shape()
            )));
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = t.data()[i * c + j];
            }
        }
        let out = Tensor::new(vec![c, r], data)?;
        Ok(self.push(Op::Transpose { x }, out))
    }

    /// Same-shape addition, or matrix + row-vector bias ([m,n] + [n]).
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].out, &self.nodes[b.0].out);
        if ta.shape() == tb.shape() {
            let data = ta
                .data()
                .iter()
                .zip(tb.data())
                .map(|(x, y)| x + y)
                .collect();
            let out = Tensor::new(ta.shape().to_vec(), data)?;
            return Ok(self.push(Op::Add { a, b }, out));
        }
        if ta.rank() == 2 && tb.rank() == 1 && ta.shape()[1] == tb.shape()[0] {
            let (m, n) = (ta.shape()[0], ta.shape()[1]);
            let mut data = ta.data().to_vec();
            for i in 0..m {
                for j in 0..n {
                    data[i * n + j] += tb.data()[j];
                }
            }
            let out = Tensor::new(vec![m, n], data)?;
            return Ok(self.push(Op::AddRowBias { m: a, bias: b }, out));
        }
        Err(Error::ShapeMismatch {
            op: "add",
            left: ta.shape().to_vec(),
            right: tb.shape().to_vec(),
        })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].out, &self.nodes[b.0].out);
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                op: "sub",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x - y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(Op::Sub { a, b }, out))
    }

    /// Elementwise product of same-shape tensors.
    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].out, &self.nodes[b.0].out);
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                op: "hadamard",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(Op::Hadamard { a, b }, out))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let out = self.nodes[x.0].out.map(|v| v * c);
        if !out.all_finite() {
            return Err(Error::NonFinite {
                what: "scale output".into(),
            });
        }
        Ok(self.push(Op::Scale { x, c }, out))
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let out = self.nodes[x.0].out.map(|v| v + c);
        if !out.all_finite() {
            return Err(Error::NonFinite {
                what: "add_scalar output".into(),
            });
        }
        Ok(self.push(Op::AddScalar { x }, out))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].out.map(stable_sigmoid);
        self.push(Op::Sigmoid { x }, out)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].out.map(f64::tanh);
        self.push(Op::Tanh { x }, out)
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        let out = self.nodes[x.0].out.map(f64::exp);
        if !out.all_finite() {
            return Err(Error::Domain {
                op: "exp",
                detail: "overflow to infinity".into(),
            });
        }
        Ok(self.push(Op::Exp { x }, out))
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        let t = &self.nodes[x.0].out;
        if let Some(v) = t.data().iter().find(|v| **v <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive input {v}"),
            });
        }
        let out = t.map(f64::ln);
        Ok(self.push(Op::Log { x }, out))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.nodes[x.0].out.data().iter().sum();
        self.push(Op::Sum { x }, Tensor::scalar(s))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let t = &self.nodes[x.0].out;
        let s: f64 = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Op::Mean { x }, Tensor::scalar(s))
    }

    /// Mean over all entries of (a - b)^2; the squared-error reduction.
    pub fn sq_err_mean(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].out, &self.nodes[b.0].out);
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                op: "sq_err_mean",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let n = ta.len() as f64;
        let s: f64 = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n;
        Ok(self.push(Op::SqErrMean { a, b }, Tensor::scalar(s)))
    }

    /// Sum over all entries of (a - b)^2; the plain squared norm of the residual.
    pub fn sq_err_sum(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.nodes[a.0].out, &self.nodes[b.0].out);
        if ta.shape() != tb.shape() {
            return Err(Error::ShapeMismatch {
                op: "sq_err_sum",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let s: f64 = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Ok(self.push(Op::SqErrSum { a, b }, Tensor::scalar(s)))
    }

    /// Clamp to [lo, hi]; gradient passes through strictly inside the band.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        if lo >= hi {
            return Err(Error::Contract(format!("clamp bounds inverted: [{lo}, {hi}]")));
        }
        let out = self.nodes[x.0].out.map(|v| v.clamp(lo, hi));
        Ok(self.push(Op::Clamp { x, lo, hi }, out))
    }

    /// Columns [start, start+len) of a 2-d tensor.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let t = &self.nodes[x.0].out;
        if t.rank() != 2 || start + len > t.shape()[1] || len == 0 {
            return Err(Error::Contract(format!(
                "slice_cols [{start}, {}) out of range for shape {:?}",
                start + len,
                t.shape()
            )));
        }
        let (rows, cols) = (t.shape()[0], t.shape()[1]);
        let mut data = Vec::with_capacity(rows * len);
        for i in 0..rows {
            data.extend_from_slice(&t.data()[i * cols + start..i * cols + start + len]);
        }
        let out = Tensor::new(vec![rows, len], data)?;
        Ok(self.push(Op::SliceCols { x, start, len }, out))
    }

    /// Rows of `table` selected by `idx`, stacked into a [idx.len(), cols]
    /// matrix. Backward scatter-adds, so repeated indices accumulate.
    pub fn gather_rows(&mut self, table: NodeId, idx: Vec<usize>) -> Result<NodeId> {
        let t = &self.nodes[table.0].out;
        if t.rank() != 2 {
            return Err(Error::Contract(format!(
                "gather_rows needs a 2-d table, got {:?}",
                t.shape()
            )));
        }
        let (rows, cols) = (t.shape()[0], t.shape()[1]);
        if idx.is_empty() {
            return Err(Error::Contract("gather_rows with empty index list".into()));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::Contract(format!(
                "gather_rows index {bad} out of range for {rows} rows"
            )));
        }
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in &idx {
            data.extend_from_slice(&t.data()[i * cols..(i + 1) * cols]);
        }
        let out = Tensor::new(vec![idx.len(), cols], data)?;
        Ok(self.push(Op::GatherRows { table, idx }, out))
    }

    /// Mean softmax cross-entropy of `logits` [batch, classes] against labels.
    pub fn softmax_xent(&mut self, logits: NodeId, labels: Vec<usize>) -> Result<NodeId> {
        let t = &self.nodes[logits.0].out;
        if t.rank() != 2 || t.shape()[0] != labels.len() {
            return Err(Error::ShapeMismatch {
                op: "softmax_xent",
                left: t.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        let (b, c) = (t.shape()[0], t.shape()[1]);
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::Contract(format!(
                "label {bad} out of range for {c} classes"
            )));
        }
        let mut probs = vec![0.0; b * c];
        let mut loss = 0.0;
        for i in 0..b {
            let row = &t.data()[i * c..(i + 1) * c];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for j in 0..c {
                let e = (row[j] - mx).exp();
                probs[i * c + j] = e;
                denom += e;
            }
            for j in 0..c {
                probs[i * c + j] /= denom;
            }
            loss -= (probs[i * c + labels[i]]).max(1e-300).ln();
        }
        loss /= b as f64;
        let id = self.push(Op::SoftmaxXent { logits, labels }, Tensor::scalar(loss));
        self.nodes[id.0].saved = Some(Tensor::new(vec![b, c], probs)?);
        Ok(id)
    }

    /// Identity forward; gradients do not flow past it.
    pub fn detach(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x.0].out.clone();
        self.push(Op::Detach { x }, out)
    }

    /// Gradient of a scalar output with respect to every node on the tape.
    /// Nodes the output does not depend on have zero gradients.
    pub fn backward(&self, out: NodeId) -> Result<Gradients> {
        let out_t = &self.nodes[out.0].out;
        if !out_t.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar output, got shape {:?}",
                out_t.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Tensor::scalar(1.0));

        // Reverse insertion order visits each node exactly once, and every
        // input id is smaller than the node id, so accumulation is complete
        // by the time a node is visited.
        for i in (0..=out.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        let add_to = |grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor| -> Result<()> {
            match &mut grads[id.0] {
                Some(t) => t.add_scaled(&delta, 1.0),
                slot @ None => {
                    *slot = Some(delta);
                    Ok(())
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let ta = &self.nodes[a.0].out;
                let tb = &self.nodes[b.0].out;
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                let da = matmul_bt(g.data(), tb.data(), m, n, k);
                let db = matmul_at(ta.data(), g.data(), m, k, n);
                add_to(grads, *a, Tensor::new(vec![m, k], da)?)?;
                add_to(grads, *b, Tensor::new(vec![k, n], db)?)?;
            }
            Op::Transpose { x } => {
                let (r, c) = (g.shape()[0], g.shape()[1]);
                let mut data = vec![0.0; r * c];
                for i2 in 0..r {
                    for j in 0..c {
                        data[j * r + i2] = g.data()[i2 * c + j];
                    }
                }
                add_to(grads, *x, Tensor::new(vec![c, r], data)?)?;
            }
            Op::Add { a, b } => {
                add_to(grads, *a, g.clone())?;
                add_to(grads, *b, g.clone())?;
            }
            Op::AddRowBias { m, bias } => {
                add_to(grads, *m, g.clone())?;
                let (r, c) = (g.shape()[0], g.shape()[1]);
                let mut db = vec![0.0; c];
                for i2 in 0..r {
                    for j in 0..c {
                        db[j] += g.data()[i2 * c + j];
                    }
                }
                add_to(grads, *bias, Tensor::new(vec![c], db)?)?;
            }
            Op::Sub { a, b } => {
                add_to(grads, *a, g.clone())?;
                add_to(grads, *b, g.map(|v| -v))?;
            }
            Op::Hadamard { a, b } => {
                let ta = &self.nodes[a.0].out;
                let tb = &self.nodes[b.0].out;
                let da: Vec<f64> = g.data().iter().zip(tb.data()).map(|(g, y)| g * y).collect();
                let db: Vec<f64> = g.data().iter().zip(ta.data()).map(|(g, x)| g * x).collect();
                add_to(grads, *a, Tensor::new(ta.shape().to_vec(), da)?)?;
                add_to(grads, *b, Tensor::new(tb.shape().to_vec(), db)?)?;
            }
            Op::Scale { x, c } => {
                add_to(grads, *x, g.map(|v| v * c))?;
            }
            Op::AddScalar { x } => {
                add_to(grads, *x, g.clone())?;
            }
            Op::Sigmoid { x } => {
                let y = &node.out;
                let d: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                add_to(grads, *x, Tensor::new(y.shape().to_vec(), d)?)?;
            }
            Op::Tanh { x } => {
                let y = &node.out;
                let d: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(g, y)| g * (1.0 - y * y))
                    .collect();
                add_to(grads, *x, Tensor::new(y.shape().to_vec(), d)?)?;
            }
            Op::Exp { x } => {
                let y = &node.out;
                let d: Vec<f64> = g.data().iter().zip(y.data()).map(|(g, y)| g * y).collect();
                add_to(grads, *x, Tensor::new(y.shape().to_vec(), d)?)?;
            }
            Op::Log { x } => {
                let tx = &self.nodes[x.0].out;
                let d: Vec<f64> = g.data().iter().zip(tx.data()).map(|(g, x)| g / x).collect();
                add_to(grads, *x, Tensor::new(tx.shape().to_vec(), d)?)?;
            }
            Op::Sum { x } => {
                let tx = &self.nodes[x.0].out;
                let gv = g.data()[0];
                add_to(grads, *x, Tensor::full(tx.shape(), gv))?;
            }
            Op::Mean { x } => {
                let tx = &self.nodes[x.0].out;
                let gv = g.data()[0] / tx.len() as f64;
                add_to(grads, *x, Tensor::full(tx.shape(), gv))?;
            }
            Op::SqErrMean { a, b } => {
                let ta = &self.nodes[a.0].out;
                let tb = &self.nodes[b.0].out;
                let scale = 2.0 * g.data()[0] / ta.len() as f64;
                let da: Vec<f64> = ta
                    .data()
                    .iter()
                    .zip(tb.data())
                    .map(|(x, y)| scale * (x - y))
                    .collect();
                let db: Vec<f64> = da.iter().map(|v| -v).collect();
                add_to(grads, *a, Tensor::new(ta.shape().to_vec(), da)?)?;
                add_to(grads, *b, Tensor::new(tb.shape().to_vec(), db)?)?;
            }
            Op::SqErrSum { a, b } => {
                let ta = &self.nodes[a.0].out;
                let tb = &self.nodes[b.0].out;
                let scale = 2.0 * g.data()[0];
                let da: Vec<f64> = ta
                    .data()
                    .iter()
                    .zip(tb.data())
                    .map(|(x, y)| scale * (x - y))
                    .collect();
                let db: Vec<f64> = da.iter().map(|v| -v).collect();
                add_to(grads, *a, Tensor::new(ta.shape().to_vec(), da)?)?;
                add_to(grads, *b, Tensor::new(tb.shape().to_vec(), db)?)?;
            }
            Op::Clamp { x, lo, hi } => {
                let tx = &self.nodes[x.0].out;
                let d: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(tx.data())
                    .map(|(g, x)| if *x > *lo && *x < *hi { *g } else { 0.0 })
                    .collect();
                add_to(grads, *x, Tensor::new(tx.shape().to_vec(), d)?)?;
            }
            Op::SliceCols { x, start, len } => {
                let tx = &self.nodes[x.0].out;
                let (rows, cols) = (tx.shape()[0], tx.shape()[1]);
                let mut d = vec![0.0; rows * cols];
                for i2 in 0..rows {
                    for j in 0..*len {
                        d[i2 * cols + start + j] = g.data()[i2 * len + j];
                    }
                }
                add_to(grads, *x, Tensor::new(vec![rows, cols], d)?)?;
            }
            Op::GatherRows { table, idx } => {
                let tt = &self.nodes[table.0].out;
                let (rows, cols) = (tt.shape()[0], tt.shape()[1]);
                let mut d = vec![0.0; rows * cols];
                for (out_row, &src_row) in idx.iter().enumerate() {
                    for j in 0..cols {
                        d[src_row * cols + j] += g.data()[out_row * cols + j];
                    }
                }
                add_to(grads, *table, Tensor::new(vec![rows, cols], d)?)?;
            }
            Op::SoftmaxXent { logits, labels } => {
                let probs = node.saved.as_ref().expect("softmax saved probs");
                let (b, c) = (probs.shape()[0], probs.shape()[1]);
                let scale = g.data()[0] / b as f64;
                let mut d = probs.data().to_vec();
                for (i2, &y) in labels.iter().enumerate() {
                    d[i2 * c + y] -= 1.0;
                }
                for v in &mut d {
                    *v *= scale;
                }
                add_to(grads, *logits, Tensor::new(vec![b, c], d)?)?;
            }
            Op::Detach { .. } => {}
        }
        Ok(())
    }
}

/// Gradient map produced by a backward pass, indexed by node id.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.index()).and_then(|g| g.as_ref())
    }

    /// Gradient with respect to `id`, zero-filled when the output never
    /// touched that node.
    pub fn wrt(&self, tape: &Tape, id: NodeId) -> Tensor {
        match self.get(id) {
            Some(t) => t.clone(),
            None => Tensor::zeros(tape.value(id).shape()),
        }
    }
}

/// Compare analytic gradients of a scalar-valued program against central
/// finite differences at `point`, returning the max over coordinates of
/// |analytic - central| / max(1, |central|).
///
/// The program must be a pure function of the leaves it is handed (bake any
/// randomness into captured constants before calling).
pub fn grad_check<F>(f: F, point: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    if step <= 0.0 {
        return Err(Error::Contract("grad_check step must be positive".into()));
    }
    let eval = |point: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = point.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &ids)?;
        tape.value(out).scalar_value()
    };

    let mut tape = Tape::new();
    let ids: Vec<NodeId> = point.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &ids)?;
    if !tape.value(out).is_scalar() {
        return Err(Error::Contract(
            "grad_check needs a scalar-valued function".into(),
        ));
    }
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = ids.iter().map(|&id| grads.wrt(&tape, id)).collect();

    let mut max_rel: f64 = 0.0;
    for ti in 0..point.len() {
        for ci in 0..point[ti].len() {
            let mut plus = point.to_vec();
            plus[ti].data_mut()[ci] += step;
            let mut minus = point.to_vec();
            minus[ti].data_mut()[ci] -= step;
            let central = (eval(&plus)? - eval(&minus)?) / (2.0 * step);
            let a = analytic[ti].data()[ci];
            let rel = (a - central).abs() / central.abs().max(1.0);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}
