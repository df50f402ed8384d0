//! Recording tape and reverse-mode gradient propagation.
//!
//! A [`Tape`] owns every intermediate value of one forward computation.
//! Operations append nodes in topological order; [`Tape::backward`] walks the
//! record once in reverse, accumulating vector-Jacobian products. A tape is
//! deliberately single-threaded; parallelism happens across tapes (one per
//! sample) with gradients reduced in a fixed order by the caller.

use std::cell::RefCell;
use std::sync::Arc;

use super::matrix::Matrix;
use super::TensorError;

/// Probabilities are clamped to this floor before any logarithm.
pub const PROB_EPS: f64 = 1e-12;

/// Symmetric neighbor lists; `j ∈ lists[i]` must imply `i ∈ lists[j]`.
pub type Neighbors = Arc<Vec<Vec<u32>>>;

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    /// matrix + broadcast 1×c row
    AddRow(usize, usize),
    Relu(usize),
    SoftmaxRows(usize),
    LogRows(usize),
    MeanRows(usize),
    SumAll(usize),
    GatherRows(usize, Vec<usize>),
    /// out_i = Σ_{j ∈ N(i)} in_j over a symmetric neighbor structure
    AdjSum(usize, Neighbors),
    ScaleRows(usize, Vec<f64>),
    KlCategorical {
        logits: usize,
        p: Vec<f64>,
        q: Vec<f64>,
    },
    CrossEntropy {
        logits: usize,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Matrix,
    requires_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy)]
pub struct Tensor<'t> {
    tape: &'t Tape,
    id: usize,
    rows: usize,
    cols: usize,
}

impl std::fmt::Debug for Tensor<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.id)
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&self, value: Matrix, requires_grad: bool, op: Op) -> Tensor<'_> {
        let (rows, cols) = value.shape();
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Tensor {
            tape: self,
            id: nodes.len() - 1,
            rows,
            cols,
        }
    }

    /// Records a leaf. Gradients are materialized only for leaves with
    /// `requires_grad` and for interior nodes on a path to one.
    pub fn leaf(&self, value: Matrix, requires_grad: bool) -> Tensor<'_> {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&self, value: Matrix) -> Tensor<'_> {
        self.leaf(value, false)
    }

    fn value_of(&self, id: usize) -> Matrix {
        self.nodes.borrow()[id].value.clone()
    }

    fn flag_of(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse pass from a 1×1 scalar; returns per-node gradients.
    pub fn backward(&self, scalar: Tensor<'_>) -> Result<Gradients, TensorError> {
        if (scalar.rows, scalar.cols) != (1, 1) {
            return Err(TensorError::NotScalar {
                rows: scalar.rows,
                cols: scalar.cols,
            });
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Matrix>> = vec![None; nodes.len()];
        grads[scalar.id] = Some(Matrix::filled(1, 1, 1.0));

        for id in (0..=scalar.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let send = |grads: &mut Vec<Option<Matrix>>, parent: usize, contrib: Matrix| {
                if !nodes[parent].requires_grad {
                    return;
                }
                match &mut grads[parent] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    if nodes[*a].requires_grad {
                        send(&mut grads, *a, g.matmul_nt(bv));
                    }
                    if nodes[*b].requires_grad {
                        send(&mut grads, *b, av.matmul_tn(&g));
                    }
                }
                Op::Add(a, b) => {
                    send(&mut grads, *a, g.clone());
                    send(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    send(&mut grads, *a, g.clone());
                    send(&mut grads, *b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let av = nodes[*a].value.clone();
                    let bv = nodes[*b].value.clone();
                    if nodes[*a].requires_grad {
                        let mut ga = g.clone();
                        for (x, y) in ga.data_mut().iter_mut().zip(bv.data()) {
                            *x *= y;
                        }
                        send(&mut grads, *a, ga);
                    }
                    if nodes[*b].requires_grad {
                        let mut gb = g;
                        for (x, y) in gb.data_mut().iter_mut().zip(av.data()) {
                            *x *= y;
                        }
                        send(&mut grads, *b, gb);
                    }
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    send(&mut grads, *a, g.map(|x| c * x));
                }
                Op::AddRow(a, bias) => {
                    if nodes[*bias].requires_grad {
                        let mut gb = Matrix::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (acc, &x) in gb.data_mut().iter_mut().zip(g.row(r)) {
                                *acc += x;
                            }
                        }
                        send(&mut grads, *bias, gb);
                    }
                    send(&mut grads, *a, g);
                }
                Op::Relu(a) => {
                    let input = &nodes[*a].value;
                    let mut ga = g;
                    for (x, &inp) in ga.data_mut().iter_mut().zip(input.data()) {
                        // gradient at exactly 0 is defined as 0
                        if inp <= 0.0 {
                            *x = 0.0;
                        }
                    }
                    send(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let out = &node.value;
                    let mut ga = Matrix::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let dot: f64 = g.row(r).iter().zip(out.row(r)).map(|(x, y)| x * y).sum();
                        for ((dst, &gx), &ox) in
                            ga.row_mut(r).iter_mut().zip(g.row(r)).zip(out.row(r))
                        {
                            *dst = ox * (gx - dot);
                        }
                    }
                    send(&mut grads, *a, ga);
                }
                Op::LogRows(a) => {
                    let input = &nodes[*a].value;
                    let mut ga = g;
                    for (x, &inp) in ga.data_mut().iter_mut().zip(input.data()) {
                        *x = if inp > PROB_EPS { *x / inp } else { 0.0 };
                    }
                    send(&mut grads, *a, ga);
                }
                Op::MeanRows(a) => {
                    let n = nodes[*a].value.rows();
                    let mut ga = Matrix::zeros(n, g.cols());
                    let inv = 1.0 / n as f64;
                    for r in 0..n {
                        for (dst, &gx) in ga.row_mut(r).iter_mut().zip(g.row(0)) {
                            *dst = gx * inv;
                        }
                    }
                    send(&mut grads, *a, ga);
                }
                Op::SumAll(a) => {
                    let (r, c) = nodes[*a].value.shape();
                    send(&mut grads, *a, Matrix::filled(r, c, g.scalar()));
                }
                Op::GatherRows(a, idx) => {
                    let (r, c) = nodes[*a].value.shape();
                    let mut ga = Matrix::zeros(r, c);
                    for (out_r, &src) in idx.iter().enumerate() {
                        for (dst, &gx) in ga.row_mut(src).iter_mut().zip(g.row(out_r)) {
                            *dst += gx;
                        }
                    }
                    send(&mut grads, *a, ga);
                }
                Op::AdjSum(a, neighbors) => {
                    send(&mut grads, *a, adj_sum_apply(&g, neighbors));
                }
                Op::ScaleRows(a, factors) => {
                    let mut ga = g;
                    for (r, &f) in factors.iter().enumerate() {
                        for x in ga.row_mut(r) {
                            *x *= f;
                        }
                    }
                    send(&mut grads, *a, ga);
                }
                Op::KlCategorical { logits, p, q } => {
                    let gs = g.scalar();
                    // Derivative of Σ_t p_t (ln p_t − ln max(q_t, ε)) wrt the
                    // logits; the indicator keeps it exact where the clamp binds.
                    let s: f64 = p
                        .iter()
                        .zip(q)
                        .map(|(&pt, &qt)| if qt > PROB_EPS { pt } else { 0.0 })
                        .sum();
                    let mut ga = Matrix::zeros(1, q.len());
                    for (j, dst) in ga.data_mut().iter_mut().enumerate() {
                        let direct = if q[j] > PROB_EPS { p[j] } else { 0.0 };
                        *dst = gs * (q[j] * s - direct);
                    }
                    send(&mut grads, *logits, ga);
                }
                Op::CrossEntropy { logits, probs } => {
                    // probs holds (softmax − onehot) from the forward pass
                    let gs = g.scalar();
                    let mut ga = Matrix::zeros(1, probs.len());
                    for (dst, &p) in ga.data_mut().iter_mut().zip(probs) {
                        *dst = gs * p;
                    }
                    send(&mut grads, *logits, ga);
                }
            }
        }

        Ok(Gradients { grads })
    }
}

fn adj_sum_apply(input: &Matrix, neighbors: &Neighbors) -> Matrix {
    let cols = input.cols();
    let mut out = Matrix::zeros(input.rows(), cols);
    for (i, ns) in neighbors.iter().enumerate() {
        let row = out.row_mut(i);
        for &j in ns {
            let src = input.row(j as usize);
            for (dst, &x) in row.iter_mut().zip(src) {
                *dst += x;
            }
        }
    }
    out
}

pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn wrt(&self, t: Tensor<'_>) -> Option<&Matrix> {
        self.grads.get(t.id).and_then(Option::as_ref)
    }

    pub fn take(&mut self, t: Tensor<'_>) -> Option<Matrix> {
        self.grads.get_mut(t.id).and_then(Option::take)
    }
}

impl<'t> Tensor<'t> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn value(&self) -> Matrix {
        self.tape.value_of(self.id)
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.flag_of(self.id)
    }

    fn binary_shape_check(&self, other: Tensor<'t>, op: &'static str) -> Result<(), TensorError> {
        if self.shape() != other.shape() {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(())
    }

    pub fn matmul(&self, other: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        if self.cols != other.rows {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let value = self.value().matmul(&other.value());
        let rq = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(value, rq, Op::MatMul(self.id, other.id)))
    }

    pub fn add(&self, other: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        self.binary_shape_check(other, "add")?;
        let mut value = self.value();
        value.add_assign(&other.value());
        let rq = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(value, rq, Op::Add(self.id, other.id)))
    }

    pub fn sub(&self, other: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        self.binary_shape_check(other, "sub")?;
        let mut value = self.value();
        value.add_assign_scaled(&other.value(), -1.0);
        let rq = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(value, rq, Op::Sub(self.id, other.id)))
    }

    pub fn mul(&self, other: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        self.binary_shape_check(other, "mul")?;
        let a = self.value();
        let mut value = other.value();
        for (x, y) in value.data_mut().iter_mut().zip(a.data()) {
            *x *= y;
        }
        let rq = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(value, rq, Op::Mul(self.id, other.id)))
    }

    pub fn scale(&self, c: f64) -> Tensor<'t> {
        let value = self.value().map(|x| c * x);
        self.tape
            .push(value, self.requires_grad(), Op::Scale(self.id, c))
    }

    /// matrix + 1×c bias row, broadcast over rows
    pub fn add_row(&self, bias: Tensor<'t>) -> Result<Tensor<'t>, TensorError> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: self.shape(),
                rhs: bias.shape(),
            });
        }
        let b = bias.value();
        let mut value = self.value();
        for r in 0..value.rows() {
            for (x, y) in value.row_mut(r).iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        let rq = self.requires_grad() || bias.requires_grad();
        Ok(self.tape.push(value, rq, Op::AddRow(self.id, bias.id)))
    }

    pub fn relu(&self) -> Tensor<'t> {
        let value = self.value().map(|x| x.max(0.0));
        self.tape
            .push(value, self.requires_grad(), Op::Relu(self.id))
    }

    /// Row-wise softmax, max-stabilized. Rows sum to 1.
    pub fn softmax_rows(&self) -> Tensor<'t> {
        let mut value = self.value();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        self.tape
            .push(value, self.requires_grad(), Op::SoftmaxRows(self.id))
    }

    /// Element-wise ln(max(x, PROB_EPS)).
    pub fn log_rows(&self) -> Tensor<'t> {
        let value = self.value().map(|x| x.max(PROB_EPS).ln());
        self.tape
            .push(value, self.requires_grad(), Op::LogRows(self.id))
    }

    /// Column-wise arithmetic mean, producing a 1×c row.
    pub fn mean_rows(&self) -> Result<Tensor<'t>, TensorError> {
        if self.rows == 0 {
            return Err(TensorError::EmptyPool);
        }
        let v = self.value();
        let mut out = Matrix::zeros(1, self.cols);
        for r in 0..self.rows {
            for (acc, &x) in out.data_mut().iter_mut().zip(v.row(r)) {
                *acc += x;
            }
        }
        let inv = 1.0 / self.rows as f64;
        for x in out.data_mut() {
            *x *= inv;
        }
        Ok(self
            .tape
            .push(out, self.requires_grad(), Op::MeanRows(self.id)))
    }

    pub fn sum_all(&self) -> Tensor<'t> {
        let s: f64 = self.value().data().iter().sum();
        self.tape.push(
            Matrix::filled(1, 1, s),
            self.requires_grad(),
            Op::SumAll(self.id),
        )
    }

    /// Copies rows in the given order; backward scatters, accumulating on
    /// repeated indices.
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Tensor<'t>, TensorError> {
        let v = self.value();
        let mut out = Matrix::zeros(idx.len(), self.cols);
        for (r, &src) in idx.iter().enumerate() {
            if src >= self.rows {
                return Err(TensorError::RowOutOfRange {
                    index: src,
                    rows: self.rows,
                });
            }
            out.row_mut(r).copy_from_slice(v.row(src));
        }
        Ok(self.tape.push(
            out,
            self.requires_grad(),
            Op::GatherRows(self.id, idx.to_vec()),
        ))
    }

    /// out_i = Σ_{j ∈ N(i)} in_j. The neighbor structure must be symmetric
    /// and have one list per row.
    pub fn adj_sum(&self, neighbors: &Neighbors) -> Result<Tensor<'t>, TensorError> {
        if neighbors.len() != self.rows {
            return Err(TensorError::ShapeMismatch {
                op: "adj_sum",
                lhs: self.shape(),
                rhs: (neighbors.len(), 0),
            });
        }
        let value = adj_sum_apply(&self.value(), neighbors);
        Ok(self.tape.push(
            value,
            self.requires_grad(),
            Op::AdjSum(self.id, Arc::clone(neighbors)),
        ))
    }

    /// Scales row r by factors[r].
    pub fn scale_rows(&self, factors: &[f64]) -> Result<Tensor<'t>, TensorError> {
        if factors.len() != self.rows {
            return Err(TensorError::ShapeMismatch {
                op: "scale_rows",
                lhs: self.shape(),
                rhs: (factors.len(), 0),
            });
        }
        let mut value = self.value();
        for (r, &f) in factors.iter().enumerate() {
            for x in value.row_mut(r) {
                *x *= f;
            }
        }
        Ok(self.tape.push(
            value,
            self.requires_grad(),
            Op::ScaleRows(self.id, factors.to_vec()),
        ))
    }

    /// KL(p ‖ softmax(self)) for a fixed target distribution p, in nats.
    /// `self` must be a 1×c row of logits. Uses 0·log 0 := 0 and clamps the
    /// softmax at [`PROB_EPS`].
    pub fn kl_categorical(&self, p: &[f64]) -> Result<Tensor<'t>, TensorError> {
        if self.rows != 1 || p.len() != self.cols {
            return Err(TensorError::ShapeMismatch {
                op: "kl_categorical",
                lhs: self.shape(),
                rhs: (1, p.len()),
            });
        }
        let sum: f64 = p.iter().sum();
        if p.iter().any(|&x| x < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(TensorError::NotADistribution { sum });
        }
        let mut q = self.value();
        softmax_in_place(q.row_mut(0));
        let q = q.data().to_vec();
        let mut val = 0.0;
        for (&pt, &qt) in p.iter().zip(&q) {
            if pt > 0.0 {
                val += pt * (pt.ln() - qt.max(PROB_EPS).ln());
            }
        }
        Ok(self.tape.push(
            Matrix::filled(1, 1, val),
            self.requires_grad(),
            Op::KlCategorical {
                logits: self.id,
                p: p.to_vec(),
                q,
            },
        ))
    }

    /// −log softmax(self)[label], max-stabilized. `self` is a 1×c logit row.
    pub fn cross_entropy(&self, label: usize) -> Result<Tensor<'t>, TensorError> {
        if self.rows != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: self.shape(),
                rhs: (1, self.cols),
            });
        }
        if label >= self.cols {
            return Err(TensorError::LabelOutOfRange {
                label,
                classes: self.cols,
            });
        }
        let v = self.value();
        let logits = v.row(0);
        let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + logits.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
        let val = lse - logits[label];
        let mut probs: Vec<f64> = logits.iter().map(|&x| (x - lse).exp()).collect();
        probs[label] -= 1.0; // stash (softmax − onehot) directly
        Ok(self.tape.push(
            Matrix::filled(1, 1, val),
            self.requires_grad(),
            Op::CrossEntropy {
                logits: self.id,
                probs,
            },
        ))
    }

    pub fn backward(&self) -> Result<Gradients, TensorError> {
        self.tape.backward(*self)
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}
