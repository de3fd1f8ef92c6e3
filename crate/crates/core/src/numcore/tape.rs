//! Reverse-mode differentiation over matrix-valued operations.
//!
//! Every operation appends a node holding its forward value, so node ids are
//! a topological order by construction. `backward` walks the nodes in reverse
//! and accumulates adjoints into each node's inputs.

use alloc::vec;
use alloc::vec::Vec;

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    ScaleBy(NodeId, NodeId),
    Transpose(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Clamp(NodeId, f64, f64),
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    Standardize(NodeId, Vec<f64>),
    SliceCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    GatherRows(NodeId, Vec<usize>),
    Sum(NodeId),
    SumSquares(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Matrix,
}

/// Single-use recording of one forward pass followed by one backward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    adjoints: Vec<Option<Matrix>>,
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

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).data()[0]
    }

    /// Which side of each piecewise boundary (ReLU at 0, clamp limits) every
    /// recorded input lies on. Two forwards with equal patterns are on the
    /// same smooth piece.
    pub fn kink_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match node.op {
                Op::Relu(a) => out.extend(self.value(a).data().iter().map(|&x| x > 0.0)),
                Op::Clamp(a, lo, hi) => out.extend(self.value(a).data().iter().map(|x| (lo..=hi).contains(x))),
                _ => {}
            }
        }
        out
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(Op::Hadamard(a, b), v))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let v = self.value(a).scale(factor);
        self.push(Op::Scale(a, factor), v)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::AddConst(a), v)
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let v = self.value(a).add_row(self.value(row))?;
        Ok(self.push(Op::AddRow(a, row), v))
    }

    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let v = self.value(a).mul_row(self.value(row))?;
        Ok(self.push(Op::MulRow(a, row), v))
    }

    /// Multiplies `a` by the 1x1 node `s`.
    pub fn scale_by(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let sv = self.value(s);
        if sv.shape() != (1, 1) {
            return Err(Error::shape("scale_by", self.value(a).shape(), sv.shape()));
        }
        let v = self.value(a).scale(sv.data()[0]);
        Ok(self.push(Op::ScaleBy(a, s), v))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(super::relu);
        self.push(Op::Relu(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(super::sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(libm::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(libm::log);
        self.push(Op::Log(a), v)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), v)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).softmax_rows();
        self.push(Op::SoftmaxRows(a), v)
    }

    pub fn log_softmax_rows(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).log_softmax_rows();
        self.push(Op::LogSoftmaxRows(a), v)
    }

    /// Row standardization without affine parameters (the core of layer norm).
    pub fn standardize_rows(&mut self, a: NodeId, eps: f64) -> NodeId {
        let (v, inv_std) = self.value(a).standardize_rows(eps);
        self.push(Op::Standardize(a, inv_std), v)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let v = self.value(a).slice_cols(start, len)?;
        Ok(self.push(Op::SliceCols(a, start), v))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let values: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::concat_cols(&values)?;
        Ok(self.push(Op::ConcatCols(parts.to_vec()), v))
    }

    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId> {
        let v = self.value(a).gather_rows(indices)?;
        Ok(self.push(Op::GatherRows(a, indices.to_vec()), v))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(Op::Sum(a), v)
    }

    pub fn sum_squares(&mut self, a: NodeId) -> NodeId {
        let v = Matrix::scalar(self.value(a).sum_squares());
        self.push(Op::SumSquares(a), v)
    }

    /// Propagates adjoints from a 1x1 loss node back to every recorded node.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Contract(alloc::format!(
                "backward needs a scalar loss, node {} is {}x{}",
                loss.0,
                shape.0,
                shape.1
            )));
        }
        self.adjoints = vec![None; self.nodes.len()];
        self.adjoints[loss.0] = Some(Matrix::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(grad) = self.adjoints[idx].take() else {
                continue;
            };
            self.propagate(idx, &grad)?;
            self.adjoints[idx] = Some(grad);
        }
        Ok(())
    }

    /// Adjoint of a node after `backward`; zeros when the loss does not depend on it.
    pub fn grad(&self, id: NodeId) -> Matrix {
        match self.adjoints.get(id.0).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.value(id).shape();
                Matrix::zeros(r, c)
            }
        }
    }

    fn accumulate(&mut self, id: NodeId, delta: Matrix) -> Result<()> {
        match &mut self.adjoints[id.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => {
                *slot = Some(delta);
                Ok(())
            }
        }
    }

    fn propagate(&mut self, idx: usize, g: &Matrix) -> Result<()> {
        let op = self.nodes[idx].op.clone();
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = g.matmul(&self.value(b).transpose())?;
                let db = self.value(a).transpose().matmul(g)?;
                self.accumulate(a, da)?;
                self.accumulate(b, db)?;
            }
            Op::Add(a, b) => {
                self.accumulate(a, g.clone())?;
                self.accumulate(b, g.clone())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(a, g.clone())?;
                self.accumulate(b, g.scale(-1.0))?;
            }
            Op::Hadamard(a, b) => {
                let da = g.hadamard(self.value(b))?;
                let db = g.hadamard(self.value(a))?;
                self.accumulate(a, da)?;
                self.accumulate(b, db)?;
            }
            Op::Scale(a, c) => self.accumulate(a, g.scale(c))?,
            Op::AddConst(a) => self.accumulate(a, g.clone())?,
            Op::AddRow(a, row) => {
                self.accumulate(a, g.clone())?;
                self.accumulate(row, g.sum_rows())?;
            }
            Op::MulRow(a, row) => {
                let da = g.mul_row(self.value(row))?;
                let drow = g.hadamard(self.value(a))?.sum_rows();
                self.accumulate(a, da)?;
                self.accumulate(row, drow)?;
            }
            Op::ScaleBy(a, s) => {
                let da = g.scale(self.scalar(s));
                let ds = Matrix::scalar(g.dot(self.value(a))?);
                self.accumulate(a, da)?;
                self.accumulate(s, ds)?;
            }
            Op::Transpose(a) => self.accumulate(a, g.transpose())?,
            Op::Relu(a) => {
                let da = g.zip_map(self.value(a), "relu", |g, x| if x > 0.0 { g } else { 0.0 })?;
                self.accumulate(a, da)?;
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[idx].value;
                let da = g.zip_map(y, "sigmoid", |g, y| g * y * (1.0 - y))?;
                self.accumulate(a, da)?;
            }
            Op::Exp(a) => {
                let da = g.hadamard(&self.nodes[idx].value)?;
                self.accumulate(a, da)?;
            }
            Op::Log(a) => {
                let da = g.zip_map(self.value(a), "log", |g, x| g / x)?;
                self.accumulate(a, da)?;
            }
            Op::Clamp(a, lo, hi) => {
                let da = g.zip_map(self.value(a), "clamp", |g, x| {
                    if (lo..=hi).contains(&x) {
                        g
                    } else {
                        0.0
                    }
                })?;
                self.accumulate(a, da)?;
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[idx].value;
                let mut da = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let inner: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for ((d, y), g) in da.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *d = y * (g - inner);
                    }
                }
                self.accumulate(a, da)?;
            }
            Op::LogSoftmaxRows(a) => {
                let y = &self.nodes[idx].value;
                let mut da = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let total: f64 = gr.iter().sum();
                    for ((d, y), g) in da.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *d = g - libm::exp(*y) * total;
                    }
                }
                self.accumulate(a, da)?;
            }
            Op::Standardize(a, inv_std) => {
                let y = &self.nodes[idx].value;
                let n = y.cols() as f64;
                let mut da = Matrix::zeros(y.rows(), y.cols());
                for (r, inv) in inv_std.iter().enumerate() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let mean_g = gr.iter().sum::<f64>() / n;
                    let mean_gy = yr.iter().zip(gr).map(|(y, g)| y * g).sum::<f64>() / n;
                    for ((d, y), g) in da.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *d = inv * (g - mean_g - y * mean_gy);
                    }
                }
                self.accumulate(a, da)?;
            }
            Op::SliceCols(a, start) => {
                let (rows, cols) = self.value(a).shape();
                let mut da = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    da.row_mut(r)[start..start + g.cols()].copy_from_slice(g.row(r));
                }
                self.accumulate(a, da)?;
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let width = self.value(p).cols();
                    let dp = g.slice_cols(offset, width)?;
                    offset += width;
                    self.accumulate(p, dp)?;
                }
            }
            Op::GatherRows(a, indices) => {
                let (rows, cols) = self.value(a).shape();
                let mut da = Matrix::zeros(rows, cols);
                for (r, &i) in indices.iter().enumerate() {
                    for (d, g) in da.row_mut(i).iter_mut().zip(g.row(r)) {
                        *d += g;
                    }
                }
                self.accumulate(a, da)?;
            }
            Op::Sum(a) => {
                let (rows, cols) = self.value(a).shape();
                self.accumulate(a, Matrix::filled(rows, cols, g.data()[0]))?;
            }
            Op::SumSquares(a) => {
                let da = self.value(a).scale(2.0 * g.data()[0]);
                self.accumulate(a, da)?;
            }
        }
        Ok(())
    }
}
