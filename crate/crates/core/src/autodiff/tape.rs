//! Define-by-run reverse-mode differentiation over [`DenseArray`] values.
//!
//! A [`Tape`] is built fresh for every forward pass. Each operation computes
//! its value eagerly and appends a node; because a node can only reference
//! nodes that already exist, creation order is a topological order and the
//! backward sweep simply walks the nodes in reverse.

use serde::{Deserialize, Serialize};

use super::array::DenseArray;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation kinds recorded on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Leaf,
    Constant,
    MatMul,
    Add,
    Sub,
    Mul,
    Scale,
    Tanh,
    Relu,
    AddBias,
    Sum,
    Mean,
    SumRows,
    ConcatRows,
    SliceCols,
    Transpose,
}

impl OpKind {
    pub const DIFFERENTIABLE: [OpKind; 14] = [
        OpKind::MatMul,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::Tanh,
        OpKind::Relu,
        OpKind::AddBias,
        OpKind::Sum,
        OpKind::Mean,
        OpKind::SumRows,
        OpKind::ConcatRows,
        OpKind::SliceCols,
        OpKind::Transpose,
    ];

    /// Inverse of [`OpKind::name`] over the differentiable operations.
    pub fn from_name(name: &str) -> Option<OpKind> {
        OpKind::DIFFERENTIABLE.into_iter().find(|op| op.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Constant => "constant",
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::Tanh => "tanh",
            OpKind::Relu => "relu",
            OpKind::AddBias => "add_bias",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::SumRows => "sum_rows",
            OpKind::ConcatRows => "concat_rows",
            OpKind::SliceCols => "slice_cols",
            OpKind::Transpose => "transpose",
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Relu(NodeId),
    AddBias(NodeId, NodeId),
    Sum(NodeId),
    Mean(NodeId),
    SumRows(NodeId),
    ConcatRows(Vec<NodeId>),
    SliceCols(NodeId, usize),
    Transpose(NodeId),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Constant => OpKind::Constant,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::Tanh(..) => OpKind::Tanh,
            Op::Relu(..) => OpKind::Relu,
            Op::AddBias(..) => OpKind::AddBias,
            Op::Sum(..) => OpKind::Sum,
            Op::Mean(..) => OpKind::Mean,
            Op::SumRows(..) => OpKind::SumRows,
            Op::ConcatRows(..) => OpKind::ConcatRows,
            Op::SliceCols(..) => OpKind::SliceCols,
            Op::Transpose(..) => OpKind::Transpose,
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: DenseArray,
    tracked: bool,
}

/// Gradients produced by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<DenseArray>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `id`; all zeros if the loss does
    /// not depend on it.
    pub fn wrt(&self, id: NodeId) -> DenseArray {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => DenseArray::zeros(&self.shapes[id.0]),
        }
    }

    /// Moves the gradient out, leaving zeros behind.
    pub fn take(&mut self, id: NodeId) -> DenseArray {
        self.grads[id.0]
            .take()
            .unwrap_or_else(|| DenseArray::zeros(&self.shapes[id.0]))
    }
}

#[derive(Default, Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<OpKind>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Corrupts the local derivative of one op kind during `backward`.
    /// Only used to check that the gradient verification catches broken rules.
    #[doc(hidden)]
    pub fn inject_gradient_fault(&mut self, op: OpKind) {
        self.fault = Some(op);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &DenseArray {
        &self.nodes[id.0].value
    }

    pub fn kind(&self, id: NodeId) -> OpKind {
        self.nodes[id.0].op.kind()
    }

    fn push(&mut self, op: Op, value: DenseArray, tracked: bool) -> NodeId {
        self.nodes.push(Node { op, value, tracked });
        NodeId(self.nodes.len() - 1)
    }

    fn tracked(&self, id: NodeId) -> bool {
        self.nodes[id.0].tracked
    }

    /// Trainable input; gradients flow into it.
    pub fn leaf(&mut self, value: DenseArray) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// Input that is never differentiated.
    pub fn constant(&mut self, value: DenseArray) -> NodeId {
        self.push(Op::Constant, value, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Op::MatMul(a, b), value, tracked))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Op::Add(a, b), value, tracked))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Op::Sub(a, b), value, tracked))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Op::Mul(a, b), value, tracked))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let value = self.value(a).map(|x| x * factor);
        let tracked = self.tracked(a);
        self.push(Op::Scale(a, factor), value, tracked)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::tanh);
        let tracked = self.tracked(a);
        self.push(Op::Tanh(a), value, tracked)
    }

    /// `max(x, 0)`; the derivative at exactly zero is taken as zero.
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let tracked = self.tracked(a);
        self.push(Op::Relu(a), value, tracked)
    }

    /// Adds the column vector `bias` (`m x 1` or length `m`) to every column
    /// of the `m x n` matrix `a`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, n) = self.value(a).dims()?;
        let (bm, bn) = self.value(bias).dims()?;
        if bm != m || bn != 1 {
            return Err(Error::Dimension {
                op: "add_bias",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(bias).shape().to_vec(),
            });
        }
        let b = self.value(bias).data().to_vec();
        let mut value = self.value(a).clone();
        for (i, row) in value.data_mut().chunks_mut(n.max(1)).enumerate().take(m) {
            for v in row.iter_mut() {
                *v += b[i];
            }
        }
        let tracked = self.tracked(a) || self.tracked(bias);
        Ok(self.push(Op::AddBias(a, bias), value, tracked))
    }

    /// Sum of all entries as a `1 x 1` array.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = DenseArray::scalar(self.value(a).sum());
        let tracked = self.tracked(a);
        self.push(Op::Sum(a), value, tracked)
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::contract("mean of an empty array"));
        }
        let value = DenseArray::scalar(self.value(a).sum() / n as f64);
        let tracked = self.tracked(a);
        Ok(self.push(Op::Mean(a), value, tracked))
    }

    /// Column sums: `m x n` to `1 x n`.
    pub fn sum_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let (m, n) = self.value(a).dims()?;
        let src = self.value(a).data();
        let mut out = vec![0.0; n];
        for i in 0..m {
            for (o, v) in out.iter_mut().zip(&src[i * n..(i + 1) * n]) {
                *o += v;
            }
        }
        let tracked = self.tracked(a);
        Ok(self.push(Op::SumRows(a), DenseArray::row(out), tracked))
    }

    /// Stacks matrices with a common column count on top of each other.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts
            .first()
            .ok_or_else(|| Error::contract("concat_rows of zero arrays"))?;
        let (_, n) = self.value(*first).dims()?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (m, pn) = self.value(p).dims()?;
            if pn != n {
                return Err(Error::Dimension {
                    op: "concat_rows",
                    lhs: self.value(*first).shape().to_vec(),
                    rhs: self.value(p).shape().to_vec(),
                });
            }
            rows += m;
            data.extend_from_slice(self.value(p).data());
        }
        let tracked = parts.iter().any(|&p| self.tracked(p));
        let value = DenseArray::from_matrix(rows, n, data)?;
        Ok(self.push(Op::ConcatRows(parts.to_vec()), value, tracked))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (m, n) = self.value(a).dims()?;
        if start > end || end > n {
            return Err(Error::contract(format!(
                "column slice {start}..{end} out of range for {n} columns"
            )));
        }
        let w = end - start;
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(m * w);
        for i in 0..m {
            data.extend_from_slice(&src[i * n + start..i * n + end]);
        }
        let tracked = self.tracked(a);
        let value = DenseArray::from_matrix(m, w, data)?;
        Ok(self.push(Op::SliceCols(a, start), value, tracked))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).transpose()?;
        let tracked = self.tracked(a);
        Ok(self.push(Op::Transpose(a), value, tracked))
    }

    /// Reverse sweep from a scalar `loss` node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<DenseArray>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(DenseArray::filled(loss_value.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(mut g) = grads[idx].take() else {
                continue;
            };
            if self.fault == Some(node.op.kind()) {
                g = g.map(|v| v * 1.5 + 1e-3);
            }
            self.propagate(&node.op, &node.value, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        // Intermediate results are not exposed; only leaves keep gradients.
        for (idx, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) {
                grads[idx] = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<DenseArray>], id: NodeId, delta: DenseArray) -> Result<()> {
        if !self.tracked(id) {
            return Ok(());
        }
        match &mut grads[id.0] {
            Some(g) => g.add_assign(&delta)?,
            slot @ None => *slot = Some(delta),
        }
        Ok(())
    }

    fn propagate(
        &self,
        op: &Op,
        out: &DenseArray,
        g: &DenseArray,
        grads: &mut [Option<DenseArray>],
    ) -> Result<()> {
        match op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                if self.tracked(*a) {
                    let ga = g.matmul_t(self.value(*b))?;
                    self.accumulate(grads, *a, ga)?;
                }
                if self.tracked(*b) {
                    let gb = self.value(*a).t_matmul(g)?;
                    self.accumulate(grads, *b, gb)?;
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.map(|v| -v))?;
            }
            Op::Mul(a, b) => {
                if self.tracked(*a) {
                    let ga = g.zip_map(self.value(*b), "mul", |x, y| x * y)?;
                    self.accumulate(grads, *a, ga)?;
                }
                if self.tracked(*b) {
                    let gb = g.zip_map(self.value(*a), "mul", |x, y| x * y)?;
                    self.accumulate(grads, *b, gb)?;
                }
            }
            Op::Scale(a, factor) => {
                let f = *factor;
                self.accumulate(grads, *a, g.map(|v| v * f))?;
            }
            Op::Tanh(a) => {
                let ga = g.zip_map(out, "tanh", |gv, y| gv * (1.0 - y * y))?;
                self.accumulate(grads, *a, ga)?;
            }
            Op::Relu(a) => {
                let ga = g.zip_map(self.value(*a), "relu", |gv, x| if x > 0.0 { gv } else { 0.0 })?;
                self.accumulate(grads, *a, ga)?;
            }
            Op::AddBias(a, bias) => {
                self.accumulate(grads, *a, g.clone())?;
                if self.tracked(*bias) {
                    let (m, n) = g.dims()?;
                    let rows: Vec<f64> = (0..m)
                        .map(|i| g.data()[i * n..(i + 1) * n].iter().sum())
                        .collect();
                    let shape = self.value(*bias).shape().to_vec();
                    self.accumulate(grads, *bias, DenseArray::new(shape, rows)?)?;
                }
            }
            Op::Sum(a) => {
                let shape = self.value(*a).shape();
                self.accumulate(grads, *a, DenseArray::filled(shape, g.data()[0]))?;
            }
            Op::Mean(a) => {
                let src = self.value(*a);
                let v = g.data()[0] / src.len() as f64;
                self.accumulate(grads, *a, DenseArray::filled(src.shape(), v))?;
            }
            Op::SumRows(a) => {
                let (m, n) = self.value(*a).dims()?;
                let mut data = Vec::with_capacity(m * n);
                for _ in 0..m {
                    data.extend_from_slice(g.data());
                }
                let shape = self.value(*a).shape().to_vec();
                self.accumulate(grads, *a, DenseArray::new(shape, data)?)?;
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    let shape = self.value(*p).shape().to_vec();
                    let piece = DenseArray::new(shape, g.data()[offset..offset + len].to_vec())?;
                    offset += len;
                    self.accumulate(grads, *p, piece)?;
                }
            }
            Op::SliceCols(a, start) => {
                let (m, n) = self.value(*a).dims()?;
                let (_, w) = g.dims()?;
                let mut full = DenseArray::zeros(self.value(*a).shape());
                let dst = full.data_mut();
                for i in 0..m {
                    dst[i * n + start..i * n + start + w].copy_from_slice(&g.data()[i * w..(i + 1) * w]);
                }
                self.accumulate(grads, *a, full)?;
            }
            Op::Transpose(a) => {
                let mut ga = g.transpose()?;
                if self.value(*a).shape().len() == 1 {
                    ga = DenseArray::new(self.value(*a).shape().to_vec(), ga.into_data())?;
                }
                self.accumulate(grads, *a, ga)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> DenseArray {
        let n = shape.iter().product();
        DenseArray::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Central finite differences of `f` around `params`.
    fn finite_difference(
        params: &[DenseArray],
        f: &dyn Fn(&[DenseArray]) -> f64,
    ) -> Vec<DenseArray> {
        let h = 1e-6;
        let mut out = Vec::new();
        for (b, block) in params.iter().enumerate() {
            let mut grad = DenseArray::zeros(block.shape());
            for i in 0..block.len() {
                let mut plus = params.to_vec();
                plus[b].data_mut()[i] += h;
                let mut minus = params.to_vec();
                minus[b].data_mut()[i] -= h;
                grad.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * h);
            }
            out.push(grad);
        }
        out
    }

    fn rel_err(a: &DenseArray, b: &DenseArray) -> f64 {
        let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        diff / a.norm().max(b.norm()).max(1e-300)
    }

    #[test]
    fn tanh_of_zero_and_relu_definition() {
        let mut t = Tape::new();
        let z = t.constant(DenseArray::column(vec![0.0]));
        let y = t.tanh(z);
        assert_eq!(t.value(y).data(), &[0.0]);
        let x = t.constant(DenseArray::column(vec![-1.0, 0.0, 2.0]));
        let r = t.relu(x);
        assert_eq!(t.value(r).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn tanh_matches_series() {
        // tanh(x) = (e^{2x} - 1) / (e^{2x} + 1) with e^{2x} from its Taylor series.
        let x: f64 = 0.5;
        let mut exp2x = 0.0;
        let mut term = 1.0;
        for n in 0..40 {
            if n > 0 {
                term *= 2.0 * x / n as f64;
            }
            exp2x += term;
        }
        let expected = (exp2x - 1.0) / (exp2x + 1.0);
        let mut t = Tape::new();
        let c = t.constant(DenseArray::scalar(x));
        let y = t.tanh(c);
        assert!((t.value(y).data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut t = Tape::new();
        let w = t.leaf(DenseArray::from_matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap());
        let s = t.sum(w);
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(w), DenseArray::filled(&[2, 3], 1.0));
    }

    #[test]
    fn half_square_gradient_is_identity() {
        let mut t = Tape::new();
        let data = vec![0.3, -1.2, 4.0];
        let w = t.leaf(DenseArray::column(data.clone()));
        let sq = t.mul(w, w).unwrap();
        let s = t.sum(sq);
        let half = t.scale(s, 0.5);
        let g = t.backward(half).unwrap();
        assert_eq!(g.wrt(w).data(), data.as_slice());
    }

    #[test]
    fn unused_leaf_gets_exact_zeros() {
        let mut t = Tape::new();
        let w = t.leaf(DenseArray::column(vec![1.0, 2.0]));
        let unused = t.leaf(DenseArray::from_matrix(2, 2, vec![1.0; 4]).unwrap());
        let s = t.sum(w);
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(unused), DenseArray::zeros(&[2, 2]));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::new();
        let w = t.leaf(DenseArray::column(vec![1.0, 2.0]));
        assert!(matches!(t.backward(w), Err(Error::Contract(_))));
    }

    #[test]
    fn shape_errors_are_dimension_errors() {
        let mut t = Tape::new();
        let a = t.leaf(DenseArray::zeros(&[2, 3]));
        let b = t.leaf(DenseArray::zeros(&[3, 2]));
        assert!(matches!(t.add(a, b), Err(Error::Dimension { .. })));
        let bias = t.leaf(DenseArray::column(vec![0.0; 3]));
        assert!(matches!(t.add_bias(a, bias), Err(Error::Dimension { .. })));
    }

    fn two_layer_loss(params: &[DenseArray], x: &DenseArray, fault: Option<OpKind>) -> (f64, Vec<DenseArray>) {
        let mut t = Tape::new();
        if let Some(f) = fault {
            t.inject_gradient_fault(f);
        }
        let ids: Vec<NodeId> = params.iter().map(|p| t.leaf(p.clone())).collect();
        let xin = t.constant(x.clone());
        let h = t.matmul(ids[0], xin).unwrap();
        let h = t.add_bias(h, ids[1]).unwrap();
        let h = t.tanh(h);
        let o = t.matmul(ids[2], h).unwrap();
        let o = t.add_bias(o, ids[3]).unwrap();
        let sq = t.mul(o, o).unwrap();
        let loss = t.mean(sq).unwrap();
        let g = t.backward(loss).unwrap();
        (t.value(loss).data()[0], ids.iter().map(|&i| g.wrt(i)).collect())
    }

    #[test]
    fn two_layer_tanh_network_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let params = vec![
            random(&[6, 3], &mut rng),
            random(&[6, 1], &mut rng),
            random(&[2, 6], &mut rng),
            random(&[2, 1], &mut rng),
        ];
        let x = random(&[3, 5], &mut rng);
        let (_, analytic) = two_layer_loss(&params, &x, None);
        let fd = finite_difference(&params, &|p| two_layer_loss(p, &x, None).0);
        for (a, f) in analytic.iter().zip(&fd) {
            assert!(rel_err(a, f) < 1e-5, "rel err {}", rel_err(a, f));
        }
    }

    #[test]
    fn injected_fault_breaks_the_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = vec![
            random(&[4, 3], &mut rng),
            random(&[4, 1], &mut rng),
            random(&[2, 4], &mut rng),
            random(&[2, 1], &mut rng),
        ];
        let x = random(&[3, 4], &mut rng);
        let (_, analytic) = two_layer_loss(&params, &x, Some(OpKind::Tanh));
        let fd = finite_difference(&params, &|p| two_layer_loss(p, &x, None).0);
        assert!(rel_err(&analytic[0], &fd[0]) > 1e-3);
    }

    #[test]
    fn structural_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let params = vec![random(&[3, 4], &mut rng), random(&[2, 4], &mut rng)];
        let f = |p: &[DenseArray]| -> (f64, Vec<DenseArray>) {
            let mut t = Tape::new();
            let a = t.leaf(p[0].clone());
            let b = t.leaf(p[1].clone());
            let stacked = t.concat_rows(&[a, b]).unwrap();
            let sl = t.slice_cols(stacked, 1, 3).unwrap();
            let tr = t.transpose(sl).unwrap();
            let r = t.relu(tr);
            let prod = t.matmul(r, sl).unwrap();
            let th = t.tanh(prod);
            let cs = t.sum_rows(th).unwrap();
            let d = t.sub(cs, cs).unwrap();
            let e = t.add(cs, d).unwrap();
            let sq = t.mul(e, e).unwrap();
            let loss = t.sum(sq);
            let g = t.backward(loss).unwrap();
            (t.value(loss).data()[0], vec![g.wrt(a), g.wrt(b)])
        };
        let (_, analytic) = f(&params);
        let fd = finite_difference(&params, &|p| f(p).0);
        for (a, d) in analytic.iter().zip(&fd) {
            assert!(rel_err(a, d) < 1e-5, "rel err {}", rel_err(a, d));
        }
    }

    #[test]
    fn backward_is_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = vec![
            random(&[6, 3], &mut rng),
            random(&[6, 1], &mut rng),
            random(&[2, 6], &mut rng),
            random(&[2, 1], &mut rng),
        ];
        let x = random(&[3, 5], &mut rng);
        let (_, a) = two_layer_loss(&params, &x, None);
        let (_, b) = two_layer_loss(&params, &x, None);
        assert_eq!(a, b);
    }
}
