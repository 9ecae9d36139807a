use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::ops::{Axis, BinaryOp, ReduceOp, UnaryOp, DIV_GUARD};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a node on a [`Tape`]. Only meaningful for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(usize),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Unary(UnaryOp, NodeId),
    Binary(BinaryOp, NodeId, NodeId),
    Scale(NodeId, f64),
    Shift(NodeId),
    Reduce(ReduceOp, Axis, NodeId),
    Broadcast(NodeId),
    HCat(Vec<NodeId>),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Define-by-run reverse-mode tape.
///
/// Every op appends a node whose inputs are strictly earlier nodes, so the
/// node order is already a topological order and `backward` is one reverse
/// sweep.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
}

/// Gradients of a scalar root with respect to every parameter node, in
/// registration order.
#[derive(Debug, Clone)]
pub struct Gradients {
    params: Vec<NodeId>,
    grads: Vec<Tensor>,
}

impl Gradients {
    /// Gradient of the `k`-th registered parameter.
    pub fn param(&self, k: usize) -> &Tensor {
        &self.grads[k]
    }

    /// Gradient for a parameter node, `None` if `node` is not a parameter.
    pub fn of(&self, node: NodeId) -> Option<&Tensor> {
        self.params
            .iter()
            .position(|&p| p == node)
            .map(|k| &self.grads[k])
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn into_vec(self) -> Vec<Tensor> {
        self.grads
    }
}

fn gemm(
    alpha: f64,
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    beta: f64,
    out: &mut [f64],
    shape: (usize, usize),
) {
    let mut c = ArrayViewMut2::from_shape(shape, out).expect("gemm output shape");
    general_mat_mul(alpha, &a, &b, beta, &mut c);
}

fn view(t: &[f64], shape: (usize, usize)) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape(shape, t).expect("tensor view shape")
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
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

    /// Parameter nodes in registration order.
    pub fn param_nodes(&self) -> &[NodeId] {
        &self.params
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn get(&self, id: NodeId) -> Result<&Tensor> {
        self.nodes
            .get(id.0)
            .map(|n| &n.value)
            .ok_or_else(|| Error::Contract(format!("node {} is not on this tape", id.0)))
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Constant, value)
    }

    /// Registers a trainable leaf. Its gradient is reported by `backward`.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        let k = self.params.len();
        let id = self.push(Op::Param(k), value);
        self.params.push(id);
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.get(a)?, self.get(b)?);
        if ta.cols() != tb.rows() {
            return Err(Error::Dimension {
                op: "matmul",
                left: ta.shape(),
                right: tb.shape(),
            });
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        gemm(
            1.0,
            view(ta.data(), (m, k)),
            view(tb.data(), (k, n)),
            0.0,
            &mut out,
            (m, n),
        );
        let value = Tensor::checked(m, n, out, "matmul")?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.get(a)?;
        let (r, c) = t.shape();
        let mut out = Vec::with_capacity(r * c);
        for j in 0..c {
            for i in 0..r {
                out.push(t.get(i, j));
            }
        }
        let value = Tensor::checked(c, r, out, "transpose")?;
        Ok(self.push(Op::Transpose(a), value))
    }

    pub fn unary(&mut self, op: UnaryOp, a: NodeId) -> Result<NodeId> {
        let t = self.get(a)?;
        if let Some(detail) = t.data().iter().find_map(|&x| op.domain_violation(x)) {
            return Err(Error::NumericalDomain {
                op: op.name(),
                detail,
            });
        }
        let out = t.data().iter().map(|&x| op.apply(x)).collect();
        let value = Tensor::checked(t.rows(), t.cols(), out, op.name())?;
        Ok(self.push(Op::Unary(op, a), value))
    }

    pub fn binary(&mut self, op: BinaryOp, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.get(a)?, self.get(b)?);
        if ta.shape() != tb.shape() {
            return Err(Error::Dimension {
                op: op.name(),
                left: ta.shape(),
                right: tb.shape(),
            });
        }
        if op == BinaryOp::Div {
            if let Some(d) = tb.data().iter().find(|d| d.abs() < DIV_GUARD) {
                return Err(Error::NumericalDomain {
                    op: "div",
                    detail: format!("denominator magnitude {d:e} below {DIV_GUARD:e}"),
                });
            }
        }
        let out = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| op.apply(x, y))
            .collect();
        let value = Tensor::checked(ta.rows(), ta.cols(), out, op.name())?;
        Ok(self.push(Op::Binary(op, a, b), value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryOp::Div, a, b)
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Abs, a)
    }

    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Sqrt, a)
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryOp::Square, a)
    }

    /// `k * a` for a fixed constant `k`.
    pub fn scale(&mut self, a: NodeId, k: f64) -> Result<NodeId> {
        let t = self.get(a)?;
        let out = t.data().iter().map(|&x| k * x).collect();
        let value = Tensor::checked(t.rows(), t.cols(), out, "scale")?;
        Ok(self.push(Op::Scale(a, k), value))
    }

    /// `a + k` for a fixed constant `k`.
    pub fn shift(&mut self, a: NodeId, k: f64) -> Result<NodeId> {
        let t = self.get(a)?;
        let out = t.data().iter().map(|&x| x + k).collect();
        let value = Tensor::checked(t.rows(), t.cols(), out, "shift")?;
        Ok(self.push(Op::Shift(a), value))
    }

    pub fn reduce(&mut self, op: ReduceOp, a: NodeId, axis: Axis) -> Result<NodeId> {
        let t = self.get(a)?;
        let (r, c) = t.shape();
        let (shape, mut out, count) = match axis {
            Axis::Rows => {
                let mut out = vec![0.0; c];
                for i in 0..r {
                    for (o, &x) in out.iter_mut().zip(&t.data()[i * c..(i + 1) * c]) {
                        *o += x;
                    }
                }
                ((1, c), out, r)
            }
            Axis::Cols => {
                let out = t.data().chunks(c.max(1)).map(|row| row.iter().sum()).collect();
                ((r, 1), out, c)
            }
            Axis::All => ((1, 1), vec![t.data().iter().sum()], r * c),
        };
        if op == ReduceOp::Mean {
            if count == 0 {
                return Err(Error::Contract("mean over an empty axis".into()));
            }
            let inv = 1.0 / count as f64;
            out.iter_mut().for_each(|x| *x *= inv);
        }
        let value = Tensor::checked(shape.0, shape.1, out, "reduce")?;
        Ok(self.push(Op::Reduce(op, axis, a), value))
    }

    pub fn sum(&mut self, a: NodeId, axis: Axis) -> Result<NodeId> {
        self.reduce(ReduceOp::Sum, a, axis)
    }

    pub fn mean(&mut self, a: NodeId, axis: Axis) -> Result<NodeId> {
        self.reduce(ReduceOp::Mean, a, axis)
    }

    /// Repeats a 1xc, rx1 or 1x1 tensor up to `rows x cols`.
    pub fn broadcast(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let t = self.get(a)?;
        let (r, c) = t.shape();
        if !((r == rows || r == 1) && (c == cols || c == 1)) {
            return Err(Error::Dimension {
                op: "broadcast",
                left: (r, c),
                right: (rows, cols),
            });
        }
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let si = if r == 1 { 0 } else { i };
            if c == cols {
                out.extend_from_slice(&t.data()[si * c..(si + 1) * c]);
            } else {
                out.extend(std::iter::repeat_n(t.get(si, 0), cols));
            }
        }
        let value = Tensor::checked(rows, cols, out, "broadcast")?;
        Ok(self.push(Op::Broadcast(a), value))
    }

    /// Concatenates tensors with equal row counts side by side.
    pub fn hcat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("hcat of zero tensors".into()))?;
        let rows = self.get(*first)?.rows();
        let mut total = 0;
        for &p in parts {
            let t = self.get(p)?;
            if t.rows() != rows {
                return Err(Error::Dimension {
                    op: "hcat",
                    left: (rows, total),
                    right: t.shape(),
                });
            }
            total += t.cols();
        }
        let mut out = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                let t = &self.nodes[p.0].value;
                out.extend_from_slice(&t.data()[i * t.cols()..(i + 1) * t.cols()]);
            }
        }
        let value = Tensor::checked(rows, total, out, "hcat")?;
        Ok(self.push(Op::HCat(parts.to_vec()), value))
    }

    /// Reverse sweep from a 1x1 root. Gradients accumulate across fan-out;
    /// parameters not reached by the root get zero gradients.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let root_value = self.get(root)?;
        if root_value.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward root must be 1x1, got {:?}",
                root_value.shape()
            )));
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        let mut param_grads: Vec<Option<Vec<f64>>> = vec![None; self.params.len()];

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(k) => param_grads[*k] = Some(g),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    let gv = view(&g, (m, n));
                    let ga = accumulate(&mut grads[a.0], m * k);
                    gemm(1.0, gv, view(tb.data(), (k, n)).t(), 1.0, ga, (m, k));
                    let gb = accumulate(&mut grads[b.0], k * n);
                    gemm(1.0, view(ta.data(), (m, k)).t(), gv, 1.0, gb, (k, n));
                }
                Op::Transpose(a) => {
                    let (r, c) = self.value(*a).shape();
                    let ga = accumulate(&mut grads[a.0], r * c);
                    for ii in 0..r {
                        for jj in 0..c {
                            ga[ii * c + jj] += g[jj * r + ii];
                        }
                    }
                }
                Op::Unary(op, a) => {
                    let x = self.value(*a).data();
                    let y = node.value.data();
                    let ga = accumulate(&mut grads[a.0], x.len());
                    for (((o, &gi), &xi), &yi) in ga.iter_mut().zip(&g).zip(x).zip(y) {
                        *o += gi * op.derivative(xi, yi);
                    }
                }
                Op::Binary(op, a, b) => {
                    let xa = self.value(*a).data();
                    let xb = self.value(*b).data();
                    let len = xa.len();
                    let mut da = vec![0.0; len];
                    let mut db = vec![0.0; len];
                    for j in 0..len {
                        let (pa, pb) = op.partials(xa[j], xb[j]);
                        da[j] = g[j] * pa;
                        db[j] = g[j] * pb;
                    }
                    for (o, d) in accumulate(&mut grads[a.0], len).iter_mut().zip(&da) {
                        *o += d;
                    }
                    for (o, d) in accumulate(&mut grads[b.0], len).iter_mut().zip(&db) {
                        *o += d;
                    }
                }
                Op::Scale(a, k) => {
                    let ga = accumulate(&mut grads[a.0], g.len());
                    for (o, &gi) in ga.iter_mut().zip(&g) {
                        *o += k * gi;
                    }
                }
                Op::Shift(a) => {
                    let ga = accumulate(&mut grads[a.0], g.len());
                    for (o, &gi) in ga.iter_mut().zip(&g) {
                        *o += gi;
                    }
                }
                Op::Reduce(op, axis, a) => {
                    let (r, c) = self.value(*a).shape();
                    let count = match axis {
                        Axis::Rows => r,
                        Axis::Cols => c,
                        Axis::All => r * c,
                    };
                    let w = match op {
                        ReduceOp::Sum => 1.0,
                        ReduceOp::Mean => 1.0 / count as f64,
                    };
                    let ga = accumulate(&mut grads[a.0], r * c);
                    for ii in 0..r {
                        for jj in 0..c {
                            let gi = match axis {
                                Axis::Rows => g[jj],
                                Axis::Cols => g[ii],
                                Axis::All => g[0],
                            };
                            ga[ii * c + jj] += w * gi;
                        }
                    }
                }
                Op::Broadcast(a) => {
                    let (r, c) = self.value(*a).shape();
                    let (rows, cols) = node.value.shape();
                    let ga = accumulate(&mut grads[a.0], r * c);
                    for ii in 0..rows {
                        let si = if r == 1 { 0 } else { ii };
                        for jj in 0..cols {
                            let sj = if c == 1 { 0 } else { jj };
                            ga[si * c + sj] += g[ii * cols + jj];
                        }
                    }
                }
                Op::HCat(parts) => {
                    let rows = node.value.rows();
                    let total = node.value.cols();
                    let mut offset = 0;
                    for p in parts {
                        let c = self.value(*p).cols();
                        let gp = accumulate(&mut grads[p.0], rows * c);
                        for ii in 0..rows {
                            for jj in 0..c {
                                gp[ii * c + jj] += g[ii * total + offset + jj];
                            }
                        }
                        offset += c;
                    }
                }
            }
        }

        let grads = self
            .params
            .iter()
            .zip(param_grads)
            .map(|(&id, g)| {
                let (r, c) = self.value(id).shape();
                match g {
                    Some(g) => Tensor::checked(r, c, g, "backward"),
                    None => Ok(Tensor::zeros(r, c)),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Gradients {
            params: self.params.clone(),
            grads,
        })
    }
}

macro_rules! unary_shorthand {
    ($($name:ident => $op:ident),* $(,)?) => {
        impl Tape {
            $(
                pub fn $name(&mut self, a: NodeId) -> Result<NodeId> {
                    self.unary(UnaryOp::$op, a)
                }
            )*
        }
    };
}

unary_shorthand! {
    neg => Neg,
    exp => Exp,
    log => Log,
    sigmoid => Sigmoid,
    relu => Relu,
    gelu => Gelu,
    elu => Elu,
    sin => Sin,
    cos => Cos,
    softplus => Softplus,
}
