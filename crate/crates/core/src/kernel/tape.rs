//! Reverse-mode differentiation over a linear operation record.
//!
//! Every operation appends one node holding its output value and enough saved
//! state to run its adjoint. Nodes are appended in evaluation order, so the
//! record is already topologically sorted and `backward` is a single reverse sweep.

use std::cell::{Cell, Ref, RefCell};
use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use super::tensor::gemm;
use super::{Float, Tensor};
use crate::error::{Error, Result};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

#[derive(Debug)]
enum Op<F> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddBcast(usize, usize),
    MulBcast(usize, usize),
    Scale(usize, F),
    AddScalar(usize),
    MatMul(usize, usize),
    Bmm { a: usize, b: usize, ta: bool, tb: bool },
    Relu(usize),
    Gelu(usize),
    Sqrt(usize),
    Square(usize),
    Softmax(usize),
    NormLast { x: usize, xhat: Vec<F>, rstd: Vec<F> },
    NormRows { x: usize, xhat: Vec<F>, rstd: Vec<F> },
    CrossEntropy { logits: usize, labels: Vec<usize>, probs: Vec<F> },
    SumAll(usize),
    MeanAxis { x: usize, axis: usize },
    Concat { inputs: Vec<usize>, axis: usize },
    Narrow { x: usize, axis: usize, start: usize },
    Permute { x: usize, perm: Vec<usize> },
    Reshape(usize),
}

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
}

/// Operation record for one forward/backward pass. Confined to one thread.
pub struct Tape<F: Float> {
    nodes: RefCell<Vec<Node<F>>>,
    pattern: Cell<u64>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, F: Float> {
    tape: &'t Tape<F>,
    id: usize,
}

impl<F: Float> std::fmt::Debug for Var<'_, F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients produced by [`Tape::backward`], indexed by recorded value.
pub struct Gradients<F> {
    grads: Vec<Option<Vec<F>>>,
    shapes: Vec<Vec<usize>>,
}

impl<F: Float> Gradients<F> {
    /// Gradient of the root with respect to `var`, or `None` when `var` does not require one.
    pub fn wrt(&self, var: Var<'_, F>) -> Option<Tensor<F>> {
        self.wrt_id(var.id)
    }

    fn wrt_id(&self, id: usize) -> Option<Tensor<F>> {
        let shape = self.shapes.get(id)?;
        match self.grads.get(id)? {
            Some(g) => Some(Tensor::new(shape, g.clone()).expect("gradient shape")),
            None => None,
        }
    }
}

impl<F: Float> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Float> Tape<F> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            pattern: Cell::new(0),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Hash of the on/off state of every rectifier evaluated so far.
    ///
    /// Two evaluations with equal patterns took the same branch at every kink,
    /// which is what finite differences need to be meaningful.
    pub fn activation_pattern(&self) -> u64 {
        self.pattern.get()
    }

    /// A differentiable input.
    pub fn leaf(&self, value: Tensor<F>) -> Result<Var<'_, F>> {
        self.push(value, Op::Leaf, true, "leaf")
    }

    /// A non-differentiable input.
    pub fn constant(&self, value: Tensor<F>) -> Result<Var<'_, F>> {
        self.push(value, Op::Leaf, false, "constant")
    }

    fn push(&self, value: Tensor<F>, op: Op<F>, requires_grad: bool, name: &str) -> Result<Var<'_, F>> {
        if !value.all_finite() {
            return Err(Error::numeric(format!("{name} produced a non-finite value")));
        }
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var { tape: self, id })
    }

    fn rg(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn value(&self, id: usize) -> Ref<'_, Tensor<F>> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Runs the reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var<'_, F>) -> Result<Gradients<F>> {
        let nodes = self.nodes.borrow();
        if nodes[root.id].value.len() != 1 {
            return Err(Error::contract(format!(
                "backward root must be scalar, got shape {:?}",
                nodes[root.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<F>>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.id] = Some(vec![F::one()]);

        for id in (0..=root.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(format!("non-finite gradient at node {id}")));
            }
            let node = &nodes[id];
            backprop(&nodes, node, &g, &mut grads);
            grads[id] = Some(g);
        }
        // drop buffers for values that never asked for a gradient
        for (g, n) in grads.iter_mut().zip(nodes.iter()) {
            if !n.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }
}

fn accumulate<F: Float>(
    nodes: &[Node<F>],
    grads: &mut [Option<Vec<F>>],
    id: usize,
    f: impl FnOnce(&mut [F]),
) {
    if !nodes[id].requires_grad {
        return;
    }
    let buf = grads[id].get_or_insert_with(|| vec![F::zero(); nodes[id].value.len()]);
    f(buf);
}

/// Splits `shape` around `axis` into (outer, len, inner).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn backprop<F: Float>(nodes: &[Node<F>], node: &Node<F>, g: &[F], grads: &mut [Option<Vec<F>>]) {
    let val = |i: usize| nodes[i].value.data();
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(nodes, grads, *a, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += *g));
            accumulate(nodes, grads, *b, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += *g));
        }
        Op::Sub(a, b) => {
            accumulate(nodes, grads, *a, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += *g));
            accumulate(nodes, grads, *b, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d -= *g));
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            accumulate(nodes, grads, *a, |d| {
                for i in 0..d.len() {
                    d[i] += g[i] * vb[i];
                }
            });
            accumulate(nodes, grads, *b, |d| {
                for i in 0..d.len() {
                    d[i] += g[i] * va[i];
                }
            });
        }
        Op::AddBcast(a, b) => {
            accumulate(nodes, grads, *a, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += *g));
            accumulate(nodes, grads, *b, |d| {
                let s = d.len();
                for chunk in g.chunks_exact(s) {
                    d.iter_mut().zip(chunk).for_each(|(d, g)| *d += *g);
                }
            });
        }
        Op::MulBcast(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let s = vb.len();
            accumulate(nodes, grads, *a, |d| {
                for (i, d) in d.iter_mut().enumerate() {
                    *d += g[i] * vb[i % s];
                }
            });
            accumulate(nodes, grads, *b, |d| {
                for (gc, ac) in g.chunks_exact(s).zip(va.chunks_exact(s)) {
                    for j in 0..s {
                        d[j] += gc[j] * ac[j];
                    }
                }
            });
        }
        Op::Scale(a, s) => {
            accumulate(nodes, grads, *a, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += *g * *s));
        }
        Op::AddScalar(a) | Op::Reshape(a) => {
            accumulate(nodes, grads, *a, |d| d.iter_mut().zip(g).for_each(|(d, g)| *d += *g));
        }
        Op::MatMul(a, b) => {
            let (m, k) = nodes[*a].value.rows_cols();
            let n = nodes[*b].value.shape()[1];
            let (va, vb) = (val(*a), val(*b));
            accumulate(nodes, grads, *a, |d| gemm(m, n, k, g, false, vb, true, d, true));
            accumulate(nodes, grads, *b, |d| gemm(k, m, n, va, true, g, false, d, true));
        }
        Op::Bmm { a, b, ta, tb } => {
            let (sa, sb) = (nodes[*a].value.shape(), nodes[*b].value.shape());
            let batch = sa[0];
            let (m, k) = if *ta { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
            let n = if *tb { sb[1] } else { sb[2] };
            let (va, vb) = (val(*a), val(*b));
            let (la, lb, lc) = (m * k, k * n, m * n);
            accumulate(nodes, grads, *a, |d| {
                for i in 0..batch {
                    let (gc, bi, di) = (&g[i * lc..(i + 1) * lc], &vb[i * lb..(i + 1) * lb], &mut d[i * la..(i + 1) * la]);
                    if *ta {
                        gemm(k, n, m, bi, *tb, gc, true, di, true);
                    } else {
                        gemm(m, n, k, gc, false, bi, !*tb, di, true);
                    }
                }
            });
            accumulate(nodes, grads, *b, |d| {
                for i in 0..batch {
                    let (gc, ai, di) = (&g[i * lc..(i + 1) * lc], &va[i * la..(i + 1) * la], &mut d[i * lb..(i + 1) * lb]);
                    if *tb {
                        gemm(n, m, k, gc, true, ai, *ta, di, true);
                    } else {
                        gemm(k, m, n, ai, !*ta, gc, false, di, true);
                    }
                }
            });
        }
        Op::Relu(a) => {
            let x = val(*a);
            accumulate(nodes, grads, *a, |d| {
                for i in 0..d.len() {
                    if x[i] > F::zero() {
                        d[i] += g[i];
                    }
                }
            });
        }
        Op::Gelu(a) => {
            let x = val(*a);
            let (c, kk, half) = (F::of(GELU_C), F::of(GELU_K), F::of(0.5));
            let three = F::of(3.0);
            accumulate(nodes, grads, *a, |d| {
                for i in 0..d.len() {
                    let xi = x[i];
                    let t = (c * (xi + kk * xi * xi * xi)).tanh();
                    let dt = (F::one() - t * t) * c * (F::one() + three * kk * xi * xi);
                    d[i] += g[i] * (half * (F::one() + t) + half * xi * dt);
                }
            });
        }
        Op::Sqrt(a) => {
            let y = node.value.data();
            let two = F::of(2.0);
            accumulate(nodes, grads, *a, |d| {
                for i in 0..d.len() {
                    d[i] += g[i] / (two * y[i]);
                }
            });
        }
        Op::Square(a) => {
            let x = val(*a);
            let two = F::of(2.0);
            accumulate(nodes, grads, *a, |d| {
                for i in 0..d.len() {
                    d[i] += two * x[i] * g[i];
                }
            });
        }
        Op::Softmax(a) => {
            let y = node.value.data();
            let (_, cols) = node.value.rows_cols();
            accumulate(nodes, grads, *a, |d| {
                for ((dr, yr), gr) in d.chunks_exact_mut(cols).zip(y.chunks_exact(cols)).zip(g.chunks_exact(cols)) {
                    let dot: F = yr.iter().zip(gr).map(|(y, g)| *y * *g).sum();
                    for j in 0..cols {
                        dr[j] += yr[j] * (gr[j] - dot);
                    }
                }
            });
        }
        Op::NormLast { x, xhat, rstd } => {
            let (_, cols) = node.value.rows_cols();
            let inv = F::one() / F::of(cols as f64);
            accumulate(nodes, grads, *x, |d| {
                for (r, ((dr, hr), gr)) in d
                    .chunks_exact_mut(cols)
                    .zip(xhat.chunks_exact(cols))
                    .zip(g.chunks_exact(cols))
                    .enumerate()
                {
                    let mg: F = gr.iter().copied().sum::<F>() * inv;
                    let mgh: F = gr.iter().zip(hr).map(|(g, h)| *g * *h).sum::<F>() * inv;
                    for j in 0..cols {
                        dr[j] += rstd[r] * (gr[j] - mg - hr[j] * mgh);
                    }
                }
            });
        }
        Op::NormRows { x, xhat, rstd } => {
            let (rows, cols) = node.value.rows_cols();
            let inv = F::one() / F::of(rows as f64);
            accumulate(nodes, grads, *x, |d| {
                let mut mg = vec![F::zero(); cols];
                let mut mgh = vec![F::zero(); cols];
                for r in 0..rows {
                    for j in 0..cols {
                        let gi = g[r * cols + j];
                        mg[j] += gi;
                        mgh[j] += gi * xhat[r * cols + j];
                    }
                }
                for r in 0..rows {
                    for j in 0..cols {
                        let i = r * cols + j;
                        d[i] += rstd[j] * (g[i] - mg[j] * inv - xhat[i] * mgh[j] * inv);
                    }
                }
            });
        }
        Op::CrossEntropy { logits, labels, probs } => {
            let rows = labels.len();
            let cols = probs.len() / rows;
            let scale = g[0] / F::of(rows as f64);
            accumulate(nodes, grads, *logits, |d| {
                for (r, &y) in labels.iter().enumerate() {
                    for j in 0..cols {
                        let t = if j == y { F::one() } else { F::zero() };
                        d[r * cols + j] += (probs[r * cols + j] - t) * scale;
                    }
                }
            });
        }
        Op::SumAll(a) => {
            accumulate(nodes, grads, *a, |d| d.iter_mut().for_each(|d| *d += g[0]));
        }
        Op::MeanAxis { x, axis } => {
            let (outer, len, inner) = split_axis(nodes[*x].value.shape(), *axis);
            let inv = F::one() / F::of(len as f64);
            accumulate(nodes, grads, *x, |d| {
                for o in 0..outer {
                    for l in 0..len {
                        for i in 0..inner {
                            d[(o * len + l) * inner + i] += g[o * inner + i] * inv;
                        }
                    }
                }
            });
        }
        Op::Concat { inputs, axis } => {
            let out_shape = node.value.shape();
            let (outer, total, inner) = split_axis(out_shape, *axis);
            let mut offset = 0;
            for &inp in inputs {
                let len = nodes[inp].value.shape()[*axis];
                accumulate(nodes, grads, inp, |d| {
                    for o in 0..outer {
                        let src = &g[(o * total + offset) * inner..(o * total + offset + len) * inner];
                        let dst = &mut d[o * len * inner..(o + 1) * len * inner];
                        dst.iter_mut().zip(src).for_each(|(d, g)| *d += *g);
                    }
                });
                offset += len;
            }
        }
        Op::Narrow { x, axis, start } => {
            let (outer, total, inner) = split_axis(nodes[*x].value.shape(), *axis);
            let len = node.value.shape()[*axis];
            accumulate(nodes, grads, *x, |d| {
                for o in 0..outer {
                    let dst = &mut d[(o * total + start) * inner..(o * total + start + len) * inner];
                    let src = &g[o * len * inner..(o + 1) * len * inner];
                    dst.iter_mut().zip(src).for_each(|(d, g)| *d += *g);
                }
            });
        }
        Op::Permute { x, perm } => {
            let in_shape = nodes[*x].value.shape();
            accumulate(nodes, grads, *x, |d| {
                for_each_permuted(in_shape, perm, |out_i, in_i| d[in_i] += g[out_i]);
            });
        }
    }
}

/// Calls `f(out_index, in_index)` for every element of `in_shape` permuted by `perm`.
fn for_each_permuted(in_shape: &[usize], perm: &[usize], mut f: impl FnMut(usize, usize)) {
    let rank = in_shape.len();
    let total: usize = in_shape.iter().product();
    if total == 0 {
        return;
    }
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut idx = vec![0usize; rank];
    let mut in_i = 0usize;
    for out_i in 0..total {
        f(out_i, in_i);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            in_i += strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            in_i -= strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
}

fn check_same(op: &str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::contract(format!("{op}: shape mismatch {a:?} vs {b:?}")));
    }
    Ok(())
}

fn check_suffix(op: &str, a: &[usize], b: &[usize]) -> Result<()> {
    if b.len() > a.len() || a[a.len() - b.len()..] != *b {
        return Err(Error::contract(format!(
            "{op}: {b:?} does not broadcast against {a:?}"
        )));
    }
    Ok(())
}

impl<'t, F: Float> Var<'t, F> {
    pub fn tape(&self) -> &'t Tape<F> {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value(self.id).shape().to_vec()
    }

    pub fn value(&self) -> Tensor<F> {
        self.tape.value(self.id).clone()
    }

    pub fn item(&self) -> Result<F> {
        self.tape.value(self.id).item()
    }

    fn unary(self, op: Op<F>, name: &str, out: Tensor<F>) -> Result<Self> {
        let rg = self.tape.rg(&[self.id]);
        self.tape.push(out, op, rg, name)
    }

    fn map(self, name: &str, op: Op<F>, f: impl Fn(F) -> F) -> Result<Self> {
        let out = {
            let v = self.tape.value(self.id);
            Tensor::new(v.shape(), v.data().iter().map(|x| f(*x)).collect())?
        };
        self.unary(op, name, out)
    }

    fn zip(self, other: Self, name: &str, op: Op<F>, f: impl Fn(F, F) -> F) -> Result<Self> {
        let out = {
            let (a, b) = (self.tape.value(self.id), self.tape.value(other.id));
            check_same(name, a.shape(), b.shape())?;
            Tensor::new(
                a.shape(),
                a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect(),
            )?
        };
        let rg = self.tape.rg(&[self.id, other.id]);
        self.tape.push(out, op, rg, name)
    }

    pub fn add(self, other: Self) -> Result<Self> {
        self.zip(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(self, other: Self) -> Result<Self> {
        self.zip(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    pub fn mul(self, other: Self) -> Result<Self> {
        self.zip(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    /// `self + other` where `other`'s shape is a trailing suffix of `self`'s.
    pub fn add_bcast(self, other: Self) -> Result<Self> {
        self.bcast(other, "add_bcast", Op::AddBcast(self.id, other.id), |a, b| a + b)
    }

    /// `self * other` where `other`'s shape is a trailing suffix of `self`'s.
    pub fn mul_bcast(self, other: Self) -> Result<Self> {
        self.bcast(other, "mul_bcast", Op::MulBcast(self.id, other.id), |a, b| a * b)
    }

    fn bcast(self, other: Self, name: &str, op: Op<F>, f: impl Fn(F, F) -> F) -> Result<Self> {
        let out = {
            let (a, b) = (self.tape.value(self.id), self.tape.value(other.id));
            check_suffix(name, a.shape(), b.shape())?;
            let s = b.len().max(1);
            let bd = b.data();
            Tensor::new(
                a.shape(),
                a.data().iter().enumerate().map(|(i, x)| f(*x, bd[i % s])).collect(),
            )?
        };
        let rg = self.tape.rg(&[self.id, other.id]);
        self.tape.push(out, op, rg, name)
    }

    pub fn scale(self, s: f64) -> Result<Self> {
        let s = F::of(s);
        self.map("scale", Op::Scale(self.id, s), |x| x * s)
    }

    pub fn add_scalar(self, s: f64) -> Result<Self> {
        let s = F::of(s);
        self.map("add_scalar", Op::AddScalar(self.id), |x| x + s)
    }

    pub fn neg(self) -> Result<Self> {
        self.scale(-1.0)
    }

    pub fn relu(self) -> Result<Self> {
        {
            let v = self.tape.value(self.id);
            let mut h = DefaultHasher::new();
            h.write_u64(self.tape.pattern.get());
            for chunk in v.data().chunks(64) {
                let bits = chunk
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (i, x)| acc | (((*x > F::zero()) as u64) << i));
                h.write_u64(bits);
            }
            self.tape.pattern.set(h.finish());
        }
        self.map("relu", Op::Relu(self.id), |x| if x > F::zero() { x } else { F::zero() })
    }

    /// Tanh-approximated Gaussian error linear unit.
    pub fn gelu(self) -> Result<Self> {
        let (c, k, half) = (F::of(GELU_C), F::of(GELU_K), F::of(0.5));
        self.map("gelu", Op::Gelu(self.id), move |x| {
            half * x * (F::one() + (c * (x + k * x * x * x)).tanh())
        })
    }

    pub fn sqrt(self) -> Result<Self> {
        {
            let v = self.tape.value(self.id);
            if v.data().iter().any(|x| *x < F::zero()) {
                return Err(Error::numeric("sqrt of a negative value"));
            }
        }
        self.map("sqrt", Op::Sqrt(self.id), |x| x.sqrt())
    }

    pub fn square(self) -> Result<Self> {
        self.map("square", Op::Square(self.id), |x| x * x)
    }

    /// Softmax along the last axis.
    pub fn softmax(self) -> Result<Self> {
        let out = {
            let v = self.tape.value(self.id);
            let (_, cols) = v.rows_cols();
            let mut data = v.data().to_vec();
            for row in data.chunks_exact_mut(cols.max(1)) {
                let max = row.iter().copied().fold(F::neg_infinity(), F::max);
                let mut sum = F::zero();
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    sum += *x;
                }
                row.iter_mut().for_each(|x| *x = *x / sum);
            }
            Tensor::new(v.shape(), data)?
        };
        self.unary(Op::Softmax(self.id), "softmax", out)
    }

    /// Standardizes each row over the last axis (biased variance), without affine terms.
    pub fn normalize_last(self, eps: f64) -> Result<Self> {
        let (out, xhat, rstd) = {
            let v = self.tape.value(self.id);
            let (rows, cols) = v.rows_cols();
            let mut xhat = v.data().to_vec();
            let mut rstd = Vec::with_capacity(rows);
            let n = F::of(cols as f64);
            for row in xhat.chunks_exact_mut(cols.max(1)) {
                let mean = row.iter().copied().sum::<F>() / n;
                let var = row.iter().map(|x| (*x - mean) * (*x - mean)).sum::<F>() / n;
                let r = F::one() / (var + F::of(eps)).sqrt();
                row.iter_mut().for_each(|x| *x = (*x - mean) * r);
                rstd.push(r);
            }
            (Tensor::new(v.shape(), xhat.clone())?, xhat, rstd)
        };
        self.unary(Op::NormLast { x: self.id, xhat, rstd }, "normalize_last", out)
    }

    /// Standardizes each column of a `[rows, cols]` matrix over its rows (batch statistics).
    pub fn normalize_rows(self, eps: f64) -> Result<Self> {
        let (out, xhat, rstd) = {
            let v = self.tape.value(self.id);
            if v.rank() != 2 {
                return Err(Error::contract(format!(
                    "normalize_rows expects a matrix, got {:?}",
                    v.shape()
                )));
            }
            let (rows, cols) = (v.shape()[0], v.shape()[1]);
            let n = F::of(rows as f64);
            let d = v.data();
            let mut mean = vec![F::zero(); cols];
            let mut var = vec![F::zero(); cols];
            for r in 0..rows {
                for j in 0..cols {
                    mean[j] += d[r * cols + j];
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / n);
            for r in 0..rows {
                for j in 0..cols {
                    let c = d[r * cols + j] - mean[j];
                    var[j] += c * c;
                }
            }
            let rstd: Vec<F> = var.iter().map(|v| F::one() / (*v / n + F::of(eps)).sqrt()).collect();
            let xhat: Vec<F> = (0..rows * cols)
                .map(|i| (d[i] - mean[i % cols]) * rstd[i % cols])
                .collect();
            (Tensor::new(v.shape(), xhat.clone())?, xhat, rstd)
        };
        self.unary(Op::NormRows { x: self.id, xhat, rstd }, "normalize_rows", out)
    }

    /// Mean softmax cross-entropy of `[rows, classes]` logits against integer labels.
    pub fn cross_entropy(self, labels: &[usize]) -> Result<Self> {
        let (loss, probs) = {
            let v = self.tape.value(self.id);
            let (rows, cols) = v.rows_cols();
            if v.rank() != 2 || rows != labels.len() || rows == 0 {
                return Err(Error::contract(format!(
                    "cross_entropy: logits {:?} vs {} labels",
                    v.shape(),
                    labels.len()
                )));
            }
            if let Some(bad) = labels.iter().find(|&&l| l >= cols) {
                return Err(Error::contract(format!("label {bad} out of range for {cols} classes")));
            }
            let mut probs = v.data().to_vec();
            let mut loss = F::zero();
            for (row, &y) in probs.chunks_exact_mut(cols).zip(labels) {
                let max = row.iter().copied().fold(F::neg_infinity(), F::max);
                let mut sum = F::zero();
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    sum += *x;
                }
                row.iter_mut().for_each(|x| *x = *x / sum);
                loss -= row[y].max(F::min_positive_value()).ln();
            }
            (loss / F::of(rows as f64), probs)
        };
        self.unary(
            Op::CrossEntropy {
                logits: self.id,
                labels: labels.to_vec(),
                probs,
            },
            "cross_entropy",
            Tensor::scalar(loss),
        )
    }

    pub fn sum(self) -> Result<Self> {
        let s = self.tape.value(self.id).data().iter().copied().sum::<F>();
        self.unary(Op::SumAll(self.id), "sum", Tensor::scalar(s))
    }

    pub fn mean(self) -> Result<Self> {
        let n = self.tape.value(self.id).len();
        self.sum()?.scale(1.0 / n as f64)
    }

    /// Mean over `axis`, which is removed from the shape.
    pub fn mean_axis(self, axis: usize) -> Result<Self> {
        let out = {
            let v = self.tape.value(self.id);
            if axis >= v.rank() {
                return Err(Error::contract(format!("mean_axis {axis} on {:?}", v.shape())));
            }
            let (outer, len, inner) = split_axis(v.shape(), axis);
            let d = v.data();
            let mut out = vec![F::zero(); outer * inner];
            for o in 0..outer {
                for l in 0..len {
                    for i in 0..inner {
                        out[o * inner + i] += d[(o * len + l) * inner + i];
                    }
                }
            }
            let inv = F::one() / F::of(len as f64);
            out.iter_mut().for_each(|x| *x *= inv);
            let mut shape = v.shape().to_vec();
            shape.remove(axis);
            Tensor::new(&shape, out)?
        };
        self.unary(Op::MeanAxis { x: self.id, axis }, "mean_axis", out)
    }

    /// `self[.., K] x other[K, N]`: all leading axes of `self` are treated as rows.
    pub fn matmul(self, other: Self) -> Result<Self> {
        let out = {
            let (a, b) = (self.tape.value(self.id), self.tape.value(other.id));
            let (m, k) = a.rows_cols();
            if b.rank() != 2 || b.shape()[0] != k || a.rank() == 0 {
                return Err(Error::contract(format!(
                    "matmul: {:?} x {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
            let n = b.shape()[1];
            let mut c = vec![F::zero(); m * n];
            gemm(m, k, n, a.data(), false, b.data(), false, &mut c, false);
            let mut shape = a.shape().to_vec();
            *shape.last_mut().unwrap() = n;
            Tensor::new(&shape, c)?
        };
        let rg = self.tape.rg(&[self.id, other.id]);
        self.tape.push(out, Op::MatMul(self.id, other.id), rg, "matmul")
    }

    /// Batched product of `[B, *, *]` tensors, each side optionally transposed.
    pub fn bmm(self, other: Self, trans_a: bool, trans_b: bool) -> Result<Self> {
        let out = {
            let (a, b) = (self.tape.value(self.id), self.tape.value(other.id));
            let (sa, sb) = (a.shape(), b.shape());
            if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
                return Err(Error::contract(format!("bmm: {sa:?} x {sb:?}")));
            }
            let (m, k) = if trans_a { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
            let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
            if k != kb {
                return Err(Error::contract(format!("bmm inner dims: {sa:?} x {sb:?}")));
            }
            let batch = sa[0];
            let mut c = vec![F::zero(); batch * m * n];
            for i in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    &a.data()[i * m * k..(i + 1) * m * k],
                    trans_a,
                    &b.data()[i * k * n..(i + 1) * k * n],
                    trans_b,
                    &mut c[i * m * n..(i + 1) * m * n],
                    false,
                );
            }
            Tensor::new(&[batch, m, n], c)?
        };
        let rg = self.tape.rg(&[self.id, other.id]);
        self.tape.push(
            out,
            Op::Bmm {
                a: self.id,
                b: other.id,
                ta: trans_a,
                tb: trans_b,
            },
            rg,
            "bmm",
        )
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let out = self.tape.value(self.id).clone().reshape(shape)?;
        self.unary(Op::Reshape(self.id), "reshape", out)
    }

    pub fn permute(self, perm: &[usize]) -> Result<Self> {
        let out = {
            let v = self.tape.value(self.id);
            let rank = v.rank();
            let mut seen = vec![false; rank];
            if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
                return Err(Error::contract(format!("invalid permutation {perm:?} for {:?}", v.shape())));
            }
            let shape: Vec<usize> = perm.iter().map(|&p| v.shape()[p]).collect();
            let mut data = vec![F::zero(); v.len()];
            let src = v.data();
            for_each_permuted(v.shape(), perm, |o, i| data[o] = src[i]);
            Tensor::new(&shape, data)?
        };
        self.unary(
            Op::Permute {
                x: self.id,
                perm: perm.to_vec(),
            },
            "permute",
            out,
        )
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Self> {
        let out = {
            let v = self.tape.value(self.id);
            if axis >= v.rank() || start + len > v.shape()[axis] {
                return Err(Error::contract(format!(
                    "narrow({axis}, {start}, {len}) on {:?}",
                    v.shape()
                )));
            }
            let (outer, total, inner) = split_axis(v.shape(), axis);
            let d = v.data();
            let mut data = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                data.extend_from_slice(&d[(o * total + start) * inner..(o * total + start + len) * inner]);
            }
            let mut shape = v.shape().to_vec();
            shape[axis] = len;
            Tensor::new(&shape, data)?
        };
        self.unary(
            Op::Narrow {
                x: self.id,
                axis,
                start,
            },
            "narrow",
            out,
        )
    }
}

/// Concatenates values along `axis`; all other axes must agree.
pub fn concat<'t, F: Float>(parts: &[Var<'t, F>], axis: usize) -> Result<Var<'t, F>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::contract("concat of zero tensors"))?;
    let tape = first.tape;
    let out = {
        let vals: Vec<_> = parts.iter().map(|p| tape.value(p.id)).collect();
        let base = vals[0].shape().to_vec();
        if axis >= base.len() {
            return Err(Error::contract(format!("concat axis {axis} on {base:?}")));
        }
        let mut total = 0;
        for v in &vals {
            let s = v.shape();
            if s.len() != base.len() || s.iter().zip(&base).enumerate().any(|(i, (a, b))| i != axis && a != b) {
                return Err(Error::contract(format!("concat: {s:?} vs {base:?}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in &vals {
                let len = v.shape()[axis];
                data.extend_from_slice(&v.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        Tensor::new(&shape, data)?
    };
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let rg = tape.rg(&ids);
    tape.push(out, Op::Concat { inputs: ids, axis }, rg, "concat")
}
