use rand::Rng;

use super::{Matrix, NumError};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(usize);

impl TensorId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A recorded value plus its gradient buffer.
///
/// `grad` is allocated (zero-filled) exactly when `requires_grad` is set and
/// always has the shape of `value`.
#[derive(Clone, Debug)]
pub struct Tensor {
    value: Matrix,
    requires_grad: bool,
    grad: Option<Matrix>,
}

impl Tensor {
    fn new(value: Matrix, requires_grad: bool) -> Self {
        let grad = requires_grad.then(|| Matrix::zeros(value.rows(), value.cols()));
        Tensor {
            value,
            requires_grad,
            grad,
        }
    }

    pub fn rows(&self) -> usize {
        self.value.rows()
    }

    pub fn cols(&self) -> usize {
        self.value.cols()
    }

    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&Matrix> {
        self.grad.as_ref()
    }
}

/// Pointwise and binary operations accepted by [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Hadamard,
    Scale(f64),
    Relu,
    Exp,
    Log,
    Neg,
    Sigmoid,
}

impl Elementwise {
    pub fn is_binary(self) -> bool {
        matches!(self, Elementwise::Add | Elementwise::Sub | Elementwise::Hadamard)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    /// Sum of all entries, 1x1.
    Sum,
    /// Column-wise mean over rows, 1xcols.
    MeanRows,
    /// Sum of squared entries, 1x1.
    SqL2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    None,
    /// Right operand is 1xcols, repeated down the rows.
    Row,
    /// Right operand is rowsx1, repeated across the columns.
    Col,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Hadamard,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(TensorId, TensorId),
    Transpose(TensorId),
    Binary {
        kind: BinaryKind,
        a: TensorId,
        b: TensorId,
        bcast: Broadcast,
    },
    Scale(TensorId, f64),
    Relu(TensorId),
    Exp(TensorId),
    Log(TensorId),
    Neg(TensorId),
    Sigmoid(TensorId),
    Clamp {
        a: TensorId,
        lo: f64,
        hi: f64,
    },
    RowSoftmax(TensorId),
    Sum(TensorId),
    MeanRows(TensorId),
    SqL2(TensorId),
    GradReverse(TensorId, f64),
    /// Mask entries are 0 or 1/(1-rate).
    Dropout(TensorId, Vec<f64>),
    RowCosineGate(TensorId, TensorId),
}

impl Op {
    fn parents(&self) -> Vec<TensorId> {
        match *self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::RowCosineGate(a, b) | Op::Binary { a, b, .. } => vec![a, b],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Neg(a)
            | Op::Sigmoid(a)
            | Op::Clamp { a, .. }
            | Op::RowSoftmax(a)
            | Op::Sum(a)
            | Op::MeanRows(a)
            | Op::SqL2(a)
            | Op::GradReverse(a, _)
            | Op::Dropout(a, _) => vec![a],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    tensor: Tensor,
    op: Op,
}

/// Ordered record of forward operations.
#[derive(Clone, Debug, Default)]
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

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> TensorId {
        self.nodes.push(Node {
            tensor: Tensor::new(value, requires_grad),
            op: Op::Leaf,
        });
        TensorId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> TensorId {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Matrix) -> TensorId {
        self.leaf(value, true)
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor {
        &self.nodes[id.0].tensor
    }

    pub fn value(&self, id: TensorId) -> &Matrix {
        &self.nodes[id.0].tensor.value
    }

    pub fn shape(&self, id: TensorId) -> (usize, usize) {
        self.value(id).shape()
    }

    pub fn grad(&self, id: TensorId) -> Option<&Matrix> {
        self.nodes[id.0].tensor.grad.as_ref()
    }

    /// Scalar value of a 1x1 tensor.
    pub fn scalar(&self, id: TensorId) -> f64 {
        let v = self.value(id);
        debug_assert_eq!(v.shape(), (1, 1));
        v.get(0, 0)
    }

    /// Direct parents of `id` in recording order.
    pub fn parents(&self, id: TensorId) -> Vec<TensorId> {
        self.nodes[id.0].op.parents()
    }

    /// Ids of every recorded tensor that lists `id` as a parent.
    pub fn consumers(&self, id: TensorId) -> Vec<TensorId> {
        (id.0 + 1..self.nodes.len())
            .filter(|&i| self.nodes[i].op.parents().contains(&id))
            .map(TensorId)
            .collect()
    }

    fn push(&mut self, value: Matrix, op: Op) -> TensorId {
        let requires_grad = op
            .parents()
            .iter()
            .any(|p| self.nodes[p.0].tensor.requires_grad);
        self.nodes.push(Node {
            tensor: Tensor::new(value, requires_grad),
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    // ── forward operations ───────────────────────────────────────────

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NumError> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn elementwise(
        &mut self,
        kind: Elementwise,
        a: TensorId,
        b: Option<TensorId>,
    ) -> Result<TensorId, NumError> {
        if kind.is_binary() {
            let b = b.ok_or_else(|| NumError::domain("elementwise", "missing right operand"))?;
            let bk = match kind {
                Elementwise::Add => BinaryKind::Add,
                Elementwise::Sub => BinaryKind::Sub,
                _ => BinaryKind::Hadamard,
            };
            return self.binary(bk, a, b);
        }
        Ok(match kind {
            Elementwise::Scale(c) => self.scale(a, c),
            Elementwise::Relu => self.relu(a),
            Elementwise::Exp => self.exp(a),
            Elementwise::Log => return self.log(a),
            Elementwise::Neg => self.neg(a),
            Elementwise::Sigmoid => self.sigmoid(a),
            Elementwise::Add | Elementwise::Sub | Elementwise::Hadamard => unreachable!(),
        })
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NumError> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NumError> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn hadamard(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NumError> {
        self.binary(BinaryKind::Hadamard, a, b)
    }

    fn binary(&mut self, kind: BinaryKind, a: TensorId, b: TensorId) -> Result<TensorId, NumError> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        let bcast = if (ra, ca) == (rb, cb) {
            Broadcast::None
        } else if rb == 1 && cb == ca {
            Broadcast::Row
        } else if cb == 1 && rb == ra {
            Broadcast::Col
        } else {
            let op = match kind {
                BinaryKind::Add => "add",
                BinaryKind::Sub => "sub",
                BinaryKind::Hadamard => "hadamard",
            };
            return Err(NumError::shape(op, (ra, ca), (rb, cb)));
        };
        let (va, vb) = (self.value(a), self.value(b));
        let value = Matrix::from_fn(ra, ca, |i, j| {
            let x = va.get(i, j);
            let y = match bcast {
                Broadcast::None => vb.get(i, j),
                Broadcast::Row => vb.get(0, j),
                Broadcast::Col => vb.get(i, 0),
            };
            match kind {
                BinaryKind::Add => x + y,
                BinaryKind::Sub => x - y,
                BinaryKind::Hadamard => x * y,
            }
        });
        Ok(self.push(value, Op::Binary { kind, a, b, bcast }))
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let value = self.value(a).map(|x| c * x);
        self.push(value, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn exp(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn log(&mut self, a: TensorId) -> Result<TensorId, NumError> {
        let v = self.value(a);
        if let Some(bad) = v.as_slice().iter().find(|&&x| x.is_nan() || x <= 0.0) {
            return Err(NumError::domain("log", format!("non-positive input {bad}")));
        }
        let value = v.map(f64::ln);
        Ok(self.push(value, Op::Log(a)))
    }

    pub fn neg(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).map(|x| -x);
        self.push(value, Op::Neg(a))
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let value = self.value(a).map(|x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        });
        self.push(value, Op::Sigmoid(a))
    }

    /// Clamps into `[lo, hi]`; gradient passes only where the input lies inside.
    pub fn clamp(&mut self, a: TensorId, lo: f64, hi: f64) -> TensorId {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(value, Op::Clamp { a, lo, hi })
    }

    pub fn row_softmax(&mut self, a: TensorId) -> Result<TensorId, NumError> {
        let v = self.value(a);
        if !v.is_finite() {
            return Err(NumError::NonFinite { op: "row_softmax" });
        }
        let mut out = v.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        Ok(self.push(out, Op::RowSoftmax(a)))
    }

    pub fn reduce(&mut self, kind: Reduction, a: TensorId) -> Result<TensorId, NumError> {
        let v = self.value(a);
        if v.is_empty() {
            return Err(NumError::domain("reduce", "empty tensor"));
        }
        Ok(match kind {
            Reduction::Sum => {
                let value = Matrix::filled(1, 1, v.sum());
                self.push(value, Op::Sum(a))
            }
            Reduction::MeanRows => {
                let n = v.rows() as f64;
                let mut value = Matrix::zeros(1, v.cols());
                for i in 0..v.rows() {
                    for (o, x) in value.row_mut(0).iter_mut().zip(v.row(i)) {
                        *o += x;
                    }
                }
                value.scale_in_place(1.0 / n);
                self.push(value, Op::MeanRows(a))
            }
            Reduction::SqL2 => {
                let s = v.as_slice().iter().map(|x| x * x).sum();
                self.push(Matrix::filled(1, 1, s), Op::SqL2(a))
            }
        })
    }

    pub fn sum(&mut self, a: TensorId) -> Result<TensorId, NumError> {
        self.reduce(Reduction::Sum, a)
    }

    pub fn mean_rows(&mut self, a: TensorId) -> Result<TensorId, NumError> {
        self.reduce(Reduction::MeanRows, a)
    }

    pub fn sq_l2(&mut self, a: TensorId) -> Result<TensorId, NumError> {
        self.reduce(Reduction::SqL2, a)
    }

    /// Identity forward; backward multiplies the upstream gradient by `-lambda`.
    pub fn grad_reverse(&mut self, a: TensorId, lambda: f64) -> TensorId {
        let value = self.value(a).clone();
        self.push(value, Op::GradReverse(a, lambda))
    }

    /// Inverted dropout. Outside training, or at rate 0, `a` is returned as is.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: TensorId,
        rate: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<TensorId, NumError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NumError::domain("dropout", format!("rate {rate} outside [0,1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let v = self.value(a);
        let mask: Vec<f64> = (0..v.len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = v.as_slice().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let value = Matrix::from_vec(v.rows(), v.cols(), data)?;
        Ok(self.push(value, Op::Dropout(a, mask)))
    }

    /// Per-row cosine between `a` and `b`, mapped to `[0, 1]` by `(1 + cos) / 2`.
    /// Rows where either side has zero norm score 0.5. Output is rows x 1.
    pub fn row_cosine_gate(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, NumError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(NumError::shape("row_cosine_gate", va.shape(), vb.shape()));
        }
        let value = Matrix::from_fn(va.rows(), 1, |i, _| {
            let (x, y) = (va.row(i), vb.row(i));
            let nx = norm(x);
            let ny = norm(y);
            if nx == 0.0 || ny == 0.0 {
                0.5
            } else {
                0.5 * (1.0 + dot(x, y) / (nx * ny))
            }
        });
        Ok(self.push(value, Op::RowCosineGate(a, b)))
    }

    // ── reverse sweep ────────────────────────────────────────────────

    /// Accumulates dLoss/dTensor into the grad buffer of every tensor that
    /// requires a gradient. Repeated calls add up.
    pub fn backward(&mut self, loss: TensorId) -> Result<(), NumError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(NumError::NonScalarLoss(shape));
        }
        if !self.nodes[loss.0].tensor.requires_grad {
            return Ok(());
        }
        let mut upstream: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        upstream[loss.0] = Some(Matrix::ones(1, 1));

        for i in (0..=loss.0).rev() {
            let Some(g) = upstream[i].take() else { continue };
            let (head, tail) = self.nodes.split_at_mut(i);
            let node = &mut tail[0];
            if let Some(buf) = node.tensor.grad.as_mut() {
                buf.add_assign(&g);
            }
            for (parent, contrib) in local_grads(head, node, &g) {
                if !head[parent.0].tensor.requires_grad {
                    continue;
                }
                match upstream[parent.0].as_mut() {
                    Some(acc) => acc.add_assign(&contrib),
                    None => upstream[parent.0] = Some(contrib),
                }
            }
        }
        Ok(())
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// Vector-Jacobian products of one node with respect to each parent.
fn local_grads(head: &[Node], node: &Node, g: &Matrix) -> Vec<(TensorId, Matrix)> {
    let out = &node.tensor.value;
    let val = |id: TensorId| &head[id.0].tensor.value;
    let wants = |id: TensorId| head[id.0].tensor.requires_grad;
    match &node.op {
        Op::Leaf => vec![],
        &Op::MatMul(a, b) => {
            let mut v = Vec::with_capacity(2);
            if wants(a) {
                v.push((a, g.matmul_t(val(b))));
            }
            if wants(b) {
                v.push((b, val(a).t_matmul(g)));
            }
            v
        }
        &Op::Transpose(a) => vec![(a, g.transpose())],
        &Op::Binary { kind, a, b, bcast } => {
            let (va, vb) = (val(a), val(b));
            let b_at = |i: usize, j: usize| match bcast {
                Broadcast::None => vb.get(i, j),
                Broadcast::Row => vb.get(0, j),
                Broadcast::Col => vb.get(i, 0),
            };
            let mut v = Vec::with_capacity(2);
            if wants(a) {
                let ga = match kind {
                    BinaryKind::Add | BinaryKind::Sub => g.clone(),
                    BinaryKind::Hadamard => {
                        Matrix::from_fn(g.rows(), g.cols(), |i, j| g.get(i, j) * b_at(i, j))
                    }
                };
                v.push((a, ga));
            }
            if wants(b) {
                let full = match kind {
                    BinaryKind::Add => g.clone(),
                    BinaryKind::Sub => g.map(|x| -x),
                    BinaryKind::Hadamard => {
                        Matrix::from_fn(g.rows(), g.cols(), |i, j| g.get(i, j) * va.get(i, j))
                    }
                };
                let gb = match bcast {
                    Broadcast::None => full,
                    Broadcast::Row => {
                        Matrix::from_fn(1, full.cols(), |_, j| (0..full.rows()).map(|i| full.get(i, j)).sum())
                    }
                    Broadcast::Col => Matrix::from_fn(full.rows(), 1, |i, _| full.row(i).iter().sum()),
                };
                v.push((b, gb));
            }
            v
        }
        &Op::Scale(a, c) => vec![(a, g.map(|x| c * x))],
        &Op::Relu(a) => {
            let va = val(a);
            vec![(a, Matrix::from_fn(g.rows(), g.cols(), |i, j| {
                if va.get(i, j) > 0.0 { g.get(i, j) } else { 0.0 }
            }))]
        }
        &Op::Exp(a) => vec![(a, Matrix::from_fn(g.rows(), g.cols(), |i, j| g.get(i, j) * out.get(i, j)))],
        &Op::Log(a) => {
            let va = val(a);
            vec![(a, Matrix::from_fn(g.rows(), g.cols(), |i, j| g.get(i, j) / va.get(i, j)))]
        }
        &Op::Neg(a) => vec![(a, g.map(|x| -x))],
        &Op::Sigmoid(a) => vec![(a, Matrix::from_fn(g.rows(), g.cols(), |i, j| {
            let y = out.get(i, j);
            g.get(i, j) * y * (1.0 - y)
        }))],
        &Op::Clamp { a, lo, hi } => {
            let va = val(a);
            vec![(a, Matrix::from_fn(g.rows(), g.cols(), |i, j| {
                let x = va.get(i, j);
                if x >= lo && x <= hi { g.get(i, j) } else { 0.0 }
            }))]
        }
        &Op::RowSoftmax(a) => {
            let mut ga = Matrix::zeros(g.rows(), g.cols());
            for i in 0..g.rows() {
                let (y, gy) = (out.row(i), g.row(i));
                let inner = dot(y, gy);
                for (o, (yj, gj)) in ga.row_mut(i).iter_mut().zip(y.iter().zip(gy)) {
                    *o = yj * (gj - inner);
                }
            }
            vec![(a, ga)]
        }
        &Op::Sum(a) => {
            let (r, c) = val(a).shape();
            vec![(a, Matrix::filled(r, c, g.get(0, 0)))]
        }
        &Op::MeanRows(a) => {
            let (r, c) = val(a).shape();
            let inv = 1.0 / r as f64;
            vec![(a, Matrix::from_fn(r, c, |_, j| g.get(0, j) * inv))]
        }
        &Op::SqL2(a) => {
            let s = 2.0 * g.get(0, 0);
            vec![(a, val(a).map(|x| s * x))]
        }
        &Op::GradReverse(a, lambda) => vec![(a, g.map(|x| -lambda * x))],
        Op::Dropout(a, mask) => {
            let data = g.as_slice().iter().zip(mask).map(|(x, m)| x * m).collect();
            vec![(*a, Matrix::from_vec(g.rows(), g.cols(), data).expect("mask shape"))]
        }
        &Op::RowCosineGate(a, b) => {
            let (va, vb) = (val(a), val(b));
            let (n, c) = va.shape();
            let mut ga = Matrix::zeros(n, c);
            let mut gb = Matrix::zeros(n, c);
            for i in 0..n {
                let (x, y) = (va.row(i), vb.row(i));
                let (nx, ny) = (norm(x), norm(y));
                if nx == 0.0 || ny == 0.0 {
                    continue;
                }
                let cos = dot(x, y) / (nx * ny);
                let s = 0.5 * g.get(i, 0);
                for j in 0..c {
                    ga.set(i, j, s * (y[j] / (nx * ny) - cos * x[j] / (nx * nx)));
                    gb.set(i, j, s * (x[j] / (nx * ny) - cos * y[j] / (ny * ny)));
                }
            }
            let mut v = Vec::with_capacity(2);
            if wants(a) {
                v.push((a, ga));
            }
            if wants(b) {
                v.push((b, gb));
            }
            v
        }
    }
}
