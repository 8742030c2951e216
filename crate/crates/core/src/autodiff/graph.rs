use super::tensor::{gemm, Tensor};
use super::AutodiffError;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Public operation kinds accepted by [`Graph::forward_op`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OpKind {
    MatMul,
    Add,
    Sub,
    Scale(f64),
    ConcatCols,
    Relu,
    LRelu(f64),
    Tanh,
    Sigmoid,
    Abs,
    Square,
    Exp,
    Log,
    SoftmaxRows,
    MeanAll,
    SumAll,
    DotRows,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Leaf,
    MatMul { ta: bool, tb: bool },
    Add,
    Sub,
    Mul,
    Scale(f64),
    Affine(f64, f64),
    AddRowBias,
    RepeatRows(usize),
    RepeatCols(usize),
    SumRows,
    SumCols,
    BroadcastScalar(usize, usize),
    ConcatCols,
    SliceCols { start: usize, len: usize },
    PadCols { left: usize, right: usize },
    Relu,
    LRelu(f64),
    Abs,
    Tanh,
    Sigmoid,
    Square,
    Exp,
    Log,
    Sqrt,
    Recip,
    RecipOrZero,
    SoftmaxRows,
    MeanAll,
    SumAll,
    MaxAll,
}

#[derive(Debug)]
struct Node {
    op: Op,
    parents: [usize; 2],
    arity: u8,
    value: Tensor,
}

impl Node {
    fn parents(&self) -> &[usize] {
        &self.parents[..self.arity as usize]
    }
}

/// Append-only computation record.
///
/// Every operation appends a node whose parents precede it, so node order is
/// a topological order. [`Graph::backward`] expresses each vector-Jacobian
/// product with the same operations, so the gradients it returns are nodes
/// of this graph and can themselves be differentiated.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

type Res = Result<Var, AutodiffError>;

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Leaf node. Parameters and inputs are both leaves; any leaf can be a
    /// differentiation target.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, &[], value)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.leaf(Tensor::scalar(value))
    }

    fn push(&mut self, op: Op, parents: &[Var], value: Tensor) -> Var {
        let mut p = [0usize; 2];
        for (slot, v) in p.iter_mut().zip(parents) {
            debug_assert!(v.0 < self.nodes.len());
            *slot = v.0;
        }
        self.nodes.push(Node {
            op,
            parents: p,
            arity: parents.len() as u8,
            value,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, op: Op, x: Var, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(x).map(f);
        self.push(op, &[x], value)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta, tb));
        }
        Ok(())
    }

    /// Dispatches one of the public operation kinds.
    pub fn forward_op(&mut self, kind: OpKind, inputs: &[Var]) -> Res {
        let want = match kind {
            OpKind::MatMul | OpKind::Add | OpKind::Sub | OpKind::ConcatCols | OpKind::DotRows => 2,
            _ => 1,
        };
        if inputs.len() != want {
            return Err(AutodiffError::Arity {
                op: kind.name(),
                expected: want,
                got: inputs.len(),
            });
        }
        let a = inputs[0];
        match kind {
            OpKind::MatMul => self.matmul(a, inputs[1]),
            OpKind::Add => self.add(a, inputs[1]),
            OpKind::Sub => self.sub(a, inputs[1]),
            OpKind::Scale(c) => Ok(self.scale(a, c)),
            OpKind::ConcatCols => self.concat_cols(a, inputs[1]),
            OpKind::Relu => Ok(self.relu(a)),
            OpKind::LRelu(s) => self.lrelu(a, s),
            OpKind::Tanh => Ok(self.tanh(a)),
            OpKind::Sigmoid => Ok(self.sigmoid(a)),
            OpKind::Abs => Ok(self.abs(a)),
            OpKind::Square => Ok(self.square(a)),
            OpKind::Exp => self.exp(a),
            OpKind::Log => self.log(a),
            OpKind::SoftmaxRows => Ok(self.softmax_rows(a)),
            OpKind::MeanAll => Ok(self.mean_all(a)),
            OpKind::SumAll => Ok(self.sum_all(a)),
            OpKind::DotRows => self.dot_rows(a, inputs[1]),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Res {
        self.matmul_t(a, false, b, false)
    }

    /// `op(a) · op(b)` with optional transposes.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Res {
        let value = gemm(self.value(a), ta, self.value(b), tb)?;
        Ok(self.push(Op::MatMul { ta, tb }, &[a, b], value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Res {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add, &[a, b], value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Res {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub, &[a, b], value))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Res {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(Op::Mul, &[a, b], value))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(Op::Scale(c), x, |v| c * v)
    }

    /// Elementwise `a·x + b`.
    pub fn affine(&mut self, x: Var, a: f64, b: f64) -> Var {
        self.unary(Op::Affine(a, b), x, |v| a * v + b)
    }

    /// Adds a 1 × m bias row to every row of an n × m input.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Res {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.rows() != 1 || tb.cols() != tx.cols() {
            return Err(mismatch("add_row_bias", tx, tb));
        }
        let mut value = tx.clone();
        let cols = tx.cols();
        for i in 0..tx.rows() {
            for (v, b) in value.row_mut(i).iter_mut().zip(tb.as_slice()) {
                *v += b;
            }
        }
        debug_assert_eq!(value.cols(), cols);
        Ok(self.push(Op::AddRowBias, &[x, bias], value))
    }

    fn repeat_rows(&mut self, x: Var, n: usize) -> Var {
        let t = self.value(x);
        debug_assert_eq!(t.rows(), 1);
        let value = Tensor::from_fn(n, t.cols(), |_, j| t.get(0, j));
        self.push(Op::RepeatRows(n), &[x], value)
    }

    fn repeat_cols(&mut self, x: Var, m: usize) -> Var {
        let t = self.value(x);
        debug_assert_eq!(t.cols(), 1);
        let value = Tensor::from_fn(t.rows(), m, |i, _| t.get(i, 0));
        self.push(Op::RepeatCols(m), &[x], value)
    }

    /// Column sums: n × m → 1 × m.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let mut value = Tensor::zeros(1, t.cols());
        for i in 0..t.rows() {
            for (acc, v) in value.as_mut_slice().iter_mut().zip(t.row(i)) {
                *acc += v;
            }
        }
        self.push(Op::SumRows, &[x], value)
    }

    /// Row sums: n × m → n × 1.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor::from_fn(t.rows(), 1, |i, _| t.row(i).iter().sum());
        self.push(Op::SumCols, &[x], value)
    }

    fn broadcast_scalar(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let s = self.value(x).item();
        self.push(Op::BroadcastScalar(rows, cols), &[x], Tensor::filled(rows, cols, s))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Res {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(mismatch("concat_cols", ta, tb));
        }
        let value = Tensor::from_fn(ta.rows(), ta.cols() + tb.cols(), |i, j| {
            if j < ta.cols() {
                ta.get(i, j)
            } else {
                tb.get(i, j - ta.cols())
            }
        });
        Ok(self.push(Op::ConcatCols, &[a, b], value))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Res {
        let t = self.value(x);
        if start + len > t.cols() {
            return Err(AutodiffError::ShapeMismatch {
                op: "slice_cols",
                lhs: t.shape(),
                rhs: (start, len),
            });
        }
        let value = Tensor::from_fn(t.rows(), len, |i, j| t.get(i, start + j));
        Ok(self.push(Op::SliceCols { start, len }, &[x], value))
    }

    fn pad_cols(&mut self, x: Var, left: usize, right: usize) -> Var {
        let t = self.value(x);
        let cols = t.cols();
        let value = Tensor::from_fn(t.rows(), left + cols + right, |i, j| {
            if j >= left && j < left + cols {
                t.get(i, j - left)
            } else {
                0.0
            }
        });
        self.push(Op::PadCols { left, right }, &[x], value)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(Op::Relu, x, |v| v.max(0.0))
    }

    pub fn lrelu(&mut self, x: Var, slope: f64) -> Res {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(AutodiffError::Domain {
                op: "lrelu",
                detail: format!("slope {slope} outside (0, 1)"),
            });
        }
        Ok(self.unary(Op::LRelu(slope), x, move |v| if v > 0.0 { v } else { slope * v }))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(Op::Abs, x, f64::abs)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(Op::Tanh, x, f64::tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(Op::Sigmoid, x, sigmoid)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(Op::Square, x, |v| v * v)
    }

    pub fn exp(&mut self, x: Var) -> Res {
        let value = self.value(x).map(f64::exp);
        if !value.is_finite() {
            return Err(AutodiffError::Domain {
                op: "exp",
                detail: "overflow to a non-finite value".into(),
            });
        }
        Ok(self.push(Op::Exp, &[x], value))
    }

    pub fn log(&mut self, x: Var) -> Res {
        if let Some(bad) = self.value(x).as_slice().iter().find(|v| !(**v > 0.0)) {
            return Err(AutodiffError::Domain {
                op: "log",
                detail: format!("input {bad} is not strictly positive"),
            });
        }
        Ok(self.unary(Op::Log, x, f64::ln))
    }

    pub fn sqrt(&mut self, x: Var) -> Res {
        if let Some(bad) = self.value(x).as_slice().iter().find(|v| !(**v >= 0.0)) {
            return Err(AutodiffError::Domain {
                op: "sqrt",
                detail: format!("input {bad} is negative"),
            });
        }
        Ok(self.unary(Op::Sqrt, x, f64::sqrt))
    }

    pub fn recip(&mut self, x: Var) -> Res {
        if self.value(x).as_slice().iter().any(|v| *v == 0.0) {
            return Err(AutodiffError::Domain {
                op: "recip",
                detail: "division by zero".into(),
            });
        }
        Ok(self.unary(Op::Recip, x, |v| 1.0 / v))
    }

    /// `1/x`, with 0 mapped to 0. Used for the derivative of `sqrt` at 0.
    fn recip_or_zero(&mut self, x: Var) -> Var {
        self.unary(Op::RecipOrZero, x, |v| if v == 0.0 { 0.0 } else { 1.0 / v })
    }

    pub fn div(&mut self, a: Var, b: Var) -> Res {
        let inv = self.recip(b)?;
        self.mul(a, inv)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let mut value = t.clone();
        for i in 0..t.rows() {
            let row = value.row_mut(i);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        self.push(Op::SoftmaxRows, &[x], value)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let m = self.value(x).mean();
        self.push(Op::MeanAll, &[x], Tensor::scalar(m))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Op::SumAll, &[x], Tensor::scalar(s))
    }

    /// Maximum entry; the derivative flows to the first maximizer.
    pub fn max_all(&mut self, x: Var) -> Var {
        let m = self
            .value(x)
            .as_slice()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        self.push(Op::MaxAll, &[x], Tensor::scalar(m))
    }

    /// Row-wise inner products: (n × m, n × m) → n × 1.
    pub fn dot_rows(&mut self, a: Var, b: Var) -> Res {
        self.same_shape("dot_rows", a, b)?;
        let p = self.mul(a, b)?;
        Ok(self.sum_cols(p))
    }

    /// Reverse-mode gradients of the scalar `root` with respect to `wrt`.
    ///
    /// With `create_graph` the returned gradients stay attached to the graph
    /// (their own derivatives are exact); otherwise they are fresh leaves.
    /// Targets that `root` does not depend on get a zero gradient.
    pub fn backward(&mut self, root: Var, wrt: &[Var], create_graph: bool) -> Result<Vec<Var>, AutodiffError> {
        let root_shape = self.shape(root);
        if root_shape != (1, 1) {
            return Err(AutodiffError::NonScalarRoot { shape: root_shape });
        }
        let n = root.0 + 1;
        let mut target = vec![false; n];
        for w in wrt {
            if w.0 < n {
                target[w.0] = true;
            }
        }
        // relevant[i]: node i depends on some target.
        let mut relevant = target.clone();
        for i in 0..n {
            if !relevant[i] && self.nodes[i].parents().iter().any(|&p| relevant[p]) {
                relevant[i] = true;
            }
        }

        let mut grads: Vec<Option<Var>> = vec![None; n];
        if relevant[root.0] {
            grads[root.0] = Some(self.leaf(Tensor::scalar(1.0)));
        }
        for i in (0..n).rev() {
            let Some(g) = grads[i] else { continue };
            if self.nodes[i].arity == 0 {
                continue;
            }
            let parents: Vec<usize> = self.nodes[i].parents().to_vec();
            for (k, &p) in parents.iter().enumerate() {
                if !relevant[p] {
                    continue;
                }
                let contrib = self.vjp(i, k, g)?;
                grads[p] = Some(match grads[p] {
                    Some(acc) => self.add(acc, contrib)?,
                    None => contrib,
                });
            }
            if !target[i] {
                grads[i] = None;
            }
        }

        wrt.iter()
            .map(|w| {
                let g = if w.0 < n { grads[w.0] } else { None };
                Ok(match (g, create_graph) {
                    (Some(g), true) => g,
                    (Some(g), false) => {
                        let v = self.value(g).clone();
                        self.leaf(v)
                    }
                    (None, _) => {
                        let (r, c) = self.shape(*w);
                        self.leaf(Tensor::zeros(r, c))
                    }
                })
            })
            .collect()
    }

    /// Contribution of node `i`'s upstream gradient `g` to its `k`-th parent.
    fn vjp(&mut self, i: usize, k: usize, g: Var) -> Res {
        let op = self.nodes[i].op;
        let out = Var(i);
        let ps = self.nodes[i].parents;
        let (a, b) = (Var(ps[0]), Var(ps[1]));
        match op {
            Op::Leaf => unreachable!("leaves have no parents"),
            Op::MatMul { ta, tb } => {
                if k == 0 {
                    if ta {
                        self.matmul_t(b, tb, g, true)
                    } else {
                        self.matmul_t(g, false, b, !tb)
                    }
                } else if tb {
                    self.matmul_t(g, true, a, ta)
                } else {
                    self.matmul_t(a, !ta, g, false)
                }
            }
            Op::Add => Ok(g),
            Op::Sub => Ok(if k == 0 { g } else { self.scale(g, -1.0) }),
            Op::Mul => self.mul(g, if k == 0 { b } else { a }),
            Op::Scale(c) => Ok(self.scale(g, c)),
            Op::Affine(c, _) => Ok(self.scale(g, c)),
            Op::AddRowBias => Ok(if k == 0 { g } else { self.sum_rows(g) }),
            Op::RepeatRows(_) => Ok(self.sum_rows(g)),
            Op::RepeatCols(_) => Ok(self.sum_cols(g)),
            Op::SumRows => {
                let n = self.value(a).rows();
                Ok(self.repeat_rows(g, n))
            }
            Op::SumCols => {
                let m = self.value(a).cols();
                Ok(self.repeat_cols(g, m))
            }
            Op::BroadcastScalar(..) => Ok(self.sum_all(g)),
            Op::ConcatCols => {
                let ca = self.value(a).cols();
                if k == 0 {
                    self.slice_cols(g, 0, ca)
                } else {
                    let cb = self.value(b).cols();
                    self.slice_cols(g, ca, cb)
                }
            }
            Op::SliceCols { start, len } => {
                let total = self.value(a).cols();
                Ok(self.pad_cols(g, start, total - start - len))
            }
            Op::PadCols { left, right: _ } => {
                let len = self.value(a).cols();
                self.slice_cols(g, left, len)
            }
            Op::Relu => self.masked(g, a, |v| if v > 0.0 { 1.0 } else { 0.0 }),
            Op::LRelu(s) => self.masked(g, a, move |v| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    s
                } else {
                    0.0
                }
            }),
            Op::Abs => self.masked(g, a, |v| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }),
            Op::Tanh => {
                let y2 = self.square(out);
                let d = self.affine(y2, -1.0, 1.0);
                self.mul(g, d)
            }
            Op::Sigmoid => {
                let one_minus = self.affine(out, -1.0, 1.0);
                let d = self.mul(out, one_minus)?;
                self.mul(g, d)
            }
            Op::Square => {
                let d = self.scale(a, 2.0);
                self.mul(g, d)
            }
            Op::Exp => self.mul(g, out),
            Op::Log => {
                let inv = self.recip(a)?;
                self.mul(g, inv)
            }
            Op::Sqrt => {
                let inv = self.recip_or_zero(out);
                let d = self.scale(inv, 0.5);
                self.mul(g, d)
            }
            Op::Recip | Op::RecipOrZero => {
                let y2 = self.square(out);
                let d = self.scale(y2, -1.0);
                self.mul(g, d)
            }
            Op::SoftmaxRows => {
                let gy = self.mul(g, out)?;
                let s = self.sum_cols(gy);
                let m = self.value(out).cols();
                let s = self.repeat_cols(s, m);
                let centered = self.sub(g, s)?;
                self.mul(out, centered)
            }
            Op::MeanAll => {
                let (r, c) = self.shape(a);
                let bg = self.broadcast_scalar(g, r, c);
                Ok(self.scale(bg, 1.0 / (r * c) as f64))
            }
            Op::SumAll => {
                let (r, c) = self.shape(a);
                Ok(self.broadcast_scalar(g, r, c))
            }
            Op::MaxAll => {
                let t = self.value(a);
                let m = self.value(out).item();
                let first = t.as_slice().iter().position(|v| *v == m).unwrap_or(0);
                let mut mask = Tensor::zeros(t.rows(), t.cols());
                mask.as_mut_slice()[first] = 1.0;
                let (r, c) = t.shape();
                let mask = self.leaf(mask);
                let bg = self.broadcast_scalar(g, r, c);
                self.mul(bg, mask)
            }
        }
    }

    /// `g ⊙ f(value(x))` where the mask is piecewise constant in `x`.
    fn masked(&mut self, g: Var, x: Var, f: impl Fn(f64) -> f64) -> Res {
        let mask = self.value(x).map(f);
        let mask = self.leaf(mask);
        self.mul(g, mask)
    }
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Scale(_) => "scale",
            OpKind::ConcatCols => "concat_cols",
            OpKind::Relu => "relu",
            OpKind::LRelu(_) => "lrelu",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Abs => "abs",
            OpKind::Square => "square",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::SoftmaxRows => "softmax_rows",
            OpKind::MeanAll => "mean_all",
            OpKind::SumAll => "sum_all",
            OpKind::DotRows => "dot_rows",
        }
    }
}
