//! Define-by-run reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s in execution
//! order. [`Graph::backward`] walks the record in reverse, accumulating
//! upstream gradients into every node that transitively depends on a leaf
//! marked `requires_grad`. Graphs are single-use: build one per forward pass
//! and drop it after reading the gradients.

use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{numel, Tensor};
use crate::error::{Error, Result};

/// Stabilizer inside [`Graph::sqrt_eps`].
pub const SQRT_EPS: f64 = 1e-12;

/// Moduli below this are treated as zero by [`Graph::modulus`].
pub const MODULUS_FLOOR: f64 = 1e-12;

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    graph: u64,
    index: usize,
}

/// Single-input elementwise operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Relu,
    Cos,
    Sin,
    /// `sqrt(x + SQRT_EPS)`
    SqrtEps,
    Square,
    Neg,
    Scale(f64),
    Shift(f64),
    Softplus,
}

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Tanh => x.tanh(),
            Unary::Sigmoid => sigmoid(x),
            Unary::Relu => if x < 0.0 { 0.0 } else { x },
            Unary::Cos => x.cos(),
            Unary::Sin => x.sin(),
            Unary::SqrtEps => (x + SQRT_EPS).sqrt(),
            Unary::Square => x * x,
            Unary::Neg => -x,
            Unary::Scale(c) => c * x,
            Unary::Shift(c) => x + c,
            Unary::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
        }
    }

    /// dy/dx given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Tanh => 1.0 - y * y,
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Cos => -x.sin(),
            Unary::Sin => x.cos(),
            Unary::SqrtEps => 0.5 / y,
            Unary::Square => 2.0 * x,
            Unary::Neg => -1.0,
            Unary::Scale(c) => c,
            Unary::Shift(_) => 1.0,
            Unary::Softplus => sigmoid(x),
        }
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

#[derive(Debug, Clone, Copy, PartialEq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Reduce {
    Sum,
    Mean,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Binary(Binary, usize, usize),
    Unary(Unary, usize),
    Modulus(usize, usize),
    MatMul(usize, usize),
    Transpose(usize),
    AddRow(usize, usize),
    Reduce(Reduce, usize, Option<usize>),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Operation record for one forward pass.
#[derive(Debug)]
pub struct Graph {
    id: u64,
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), data.len());
        self.nodes.push(Node {
            shape,
            data,
            op,
            requires_grad,
        });
        Var {
            graph: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn node(&self, v: Var) -> Result<&Node> {
        if v.graph != self.id {
            return Err(Error::ForeignVar);
        }
        self.nodes.get(v.index).ok_or(Error::ForeignVar)
    }

    /// Records a leaf, honouring the tensor's `requires_grad` flag.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(
            t.shape().to_vec(),
            t.data().to_vec(),
            Op::Leaf,
            t.requires_grad(),
        )
    }

    /// Records a leaf that receives a gradient.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, false)
    }

    pub fn scalar_constant(&mut self, value: f64) -> Var {
        self.push(Vec::new(), vec![value], Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> Result<&[f64]> {
        Ok(&self.node(v)?.data)
    }

    pub fn shape(&self, v: Var) -> Result<&[usize]> {
        Ok(&self.node(v)?.shape)
    }

    /// Copies a recorded value out as a detached tensor.
    pub fn tensor(&self, v: Var) -> Result<Tensor> {
        let n = self.node(v)?;
        Tensor::new(n.shape.clone(), n.data.clone())
    }

    pub fn item(&self, v: Var) -> Result<f64> {
        let n = self.node(v)?;
        if n.data.len() != 1 {
            return Err(Error::Shape {
                op: "item",
                lhs: n.shape.clone(),
                rhs: vec![],
            });
        }
        Ok(n.data[0])
    }

    /// Gradient accumulated into `v` by the last [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        if v.graph != self.id {
            return None;
        }
        self.grads.get(v.index).and_then(|g| g.as_deref())
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a)?, self.node(b)?);
        let shape = broadcast_shape(&na.shape, &nb.shape).ok_or_else(|| Error::Shape {
            op: match kind {
                Binary::Add => "add",
                Binary::Sub => "sub",
                Binary::Mul => "mul",
            },
            lhs: na.shape.clone(),
            rhs: nb.shape.clone(),
        })?;
        let n = numel(&shape);
        let f = |x: f64, y: f64| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
        };
        let data: Vec<f64> = (0..n)
            .map(|i| f(at(&na.data, i), at(&nb.data, i)))
            .collect();
        let rg = na.requires_grad || nb.requires_grad;
        Ok(self.push(shape, data, Op::Binary(kind, a.index, b.index), rg))
    }

    /// Elementwise sum; equal shapes or one scalar operand.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Result<Var> {
        let na = self.node(a)?;
        let data = na.data.iter().map(|&x| kind.apply(x)).collect();
        let (shape, rg) = (na.shape.clone(), na.requires_grad);
        Ok(self.push(shape, data, Op::Unary(kind, a.index), rg))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Relu, a)
    }

    pub fn cos(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Cos, a)
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sin, a)
    }

    pub fn sqrt_eps(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::SqrtEps, a)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Square, a)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Neg, a)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(Unary::Scale(c), a)
    }

    pub fn shift(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(Unary::Shift(c), a)
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Softplus, a)
    }

    /// `sqrt(re² + im²)` elementwise. The gradient is taken as zero where the
    /// modulus is below [`MODULUS_FLOOR`].
    pub fn modulus(&mut self, re: Var, im: Var) -> Result<Var> {
        let (nr, ni) = (self.node(re)?, self.node(im)?);
        if nr.shape != ni.shape {
            return Err(Error::Shape {
                op: "modulus",
                lhs: nr.shape.clone(),
                rhs: ni.shape.clone(),
            });
        }
        let data = nr
            .data
            .iter()
            .zip(&ni.data)
            .map(|(&r, &i)| r.hypot(i))
            .collect();
        let (shape, rg) = (nr.shape.clone(), nr.requires_grad || ni.requires_grad);
        Ok(self.push(shape, data, Op::Modulus(re.index, im.index), rg))
    }

    /// Matrix product of `[n, p]` and `[p, q]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a)?, self.node(b)?);
        if na.shape.len() != 2 || nb.shape.len() != 2 || na.shape[1] != nb.shape[0] {
            return Err(Error::Shape {
                op: "matmul",
                lhs: na.shape.clone(),
                rhs: nb.shape.clone(),
            });
        }
        let (n, p, q) = (na.shape[0], na.shape[1], nb.shape[1]);
        let data = matmul_raw(&na.data, &nb.data, n, p, q);
        let rg = na.requires_grad || nb.requires_grad;
        Ok(self.push(vec![n, q], data, Op::MatMul(a.index, b.index), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let na = self.node(a)?;
        if na.shape.len() != 2 {
            return Err(Error::Shape {
                op: "transpose",
                lhs: na.shape.clone(),
                rhs: vec![],
            });
        }
        let (r, c) = (na.shape[0], na.shape[1]);
        let data = transpose_raw(&na.data, r, c);
        let rg = na.requires_grad;
        Ok(self.push(vec![c, r], data, Op::Transpose(a.index), rg))
    }

    /// Adds a length-`q` bias to every row of an `[n, q]` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (na, nb) = (self.node(a)?, self.node(bias)?);
        let q = na.shape.get(1).copied();
        if na.shape.len() != 2 || Some(nb.data.len()) != q || nb.shape.len() > 2 {
            return Err(Error::Shape {
                op: "add_row",
                lhs: na.shape.clone(),
                rhs: nb.shape.clone(),
            });
        }
        let q = nb.data.len();
        let data = na
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| x + nb.data[i % q])
            .collect();
        let (shape, rg) = (na.shape.clone(), na.requires_grad || nb.requires_grad);
        Ok(self.push(shape, data, Op::AddRow(a.index, bias.index), rg))
    }

    fn reduce(&mut self, kind: Reduce, a: Var, axis: Option<usize>) -> Result<Var> {
        let na = self.node(a)?;
        let (shape, data) = match axis {
            None => {
                let s: f64 = na.data.iter().sum();
                let v = match kind {
                    Reduce::Sum => s,
                    Reduce::Mean => s / na.data.len() as f64,
                };
                (Vec::new(), vec![v])
            }
            Some(ax) => {
                if ax >= na.shape.len() {
                    return Err(Error::Axis {
                        axis: ax,
                        rank: na.shape.len(),
                    });
                }
                let (outer, len, inner) = split_axis(&na.shape, ax);
                let mut out = vec![0.0; outer * inner];
                for o in 0..outer {
                    for l in 0..len {
                        let src = &na.data[(o * len + l) * inner..(o * len + l + 1) * inner];
                        let dst = &mut out[o * inner..(o + 1) * inner];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                if kind == Reduce::Mean {
                    let inv = 1.0 / len as f64;
                    out.iter_mut().for_each(|v| *v *= inv);
                }
                let mut shape = na.shape.clone();
                shape.remove(ax);
                (shape, out)
            }
        };
        let rg = na.requires_grad;
        Ok(self.push(shape, data, Op::Reduce(kind, a.index, axis), rg))
    }

    /// Sums over `axis`, or over everything when `axis` is `None`.
    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(Reduce::Sum, a, axis)
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(Reduce::Mean, a, axis)
    }

    /// Propagates gradients from a scalar `root` to every node it depends on.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let shape = self.node(root)?.shape.clone();
        if numel(&shape) != 1 {
            return Err(Error::NonScalarRoot(shape));
        }
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.index] = Some(vec![1.0]);

        for i in (0..=root.index).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let wants = |j: usize| self.nodes[j].requires_grad;
        match node.op {
            Op::Leaf => {}
            Op::Binary(kind, a, b) => {
                let (xa, xb) = (&self.nodes[a].data, &self.nodes[b].data);
                if wants(a) {
                    let ga: Vec<f64> = (0..g.len())
                        .map(|k| match kind {
                            Binary::Add | Binary::Sub => g[k],
                            Binary::Mul => g[k] * at(xb, k),
                        })
                        .collect();
                    accumulate_broadcast(grads, a, xa.len(), ga);
                }
                if wants(b) {
                    let gb: Vec<f64> = (0..g.len())
                        .map(|k| match kind {
                            Binary::Add => g[k],
                            Binary::Sub => -g[k],
                            Binary::Mul => g[k] * at(xa, k),
                        })
                        .collect();
                    accumulate_broadcast(grads, b, xb.len(), gb);
                }
            }
            Op::Unary(kind, a) => {
                let x = &self.nodes[a].data;
                let gi = g
                    .iter()
                    .zip(x.iter().zip(&node.data))
                    .map(|(&gk, (&xk, &yk))| gk * kind.derivative(xk, yk))
                    .collect();
                accumulate(grads, a, gi);
            }
            Op::Modulus(re, im) => {
                let (xr, xi) = (&self.nodes[re].data, &self.nodes[im].data);
                let unit = |k: usize, num: f64| {
                    let m = node.data[k];
                    if m < MODULUS_FLOOR {
                        0.0
                    } else {
                        g[k] * num / m
                    }
                };
                if wants(re) {
                    let gr = (0..g.len()).map(|k| unit(k, xr[k])).collect();
                    accumulate(grads, re, gr);
                }
                if wants(im) {
                    let gi = (0..g.len()).map(|k| unit(k, xi[k])).collect();
                    accumulate(grads, im, gi);
                }
            }
            Op::MatMul(a, b) => {
                let (na, nb) = (&self.nodes[a], &self.nodes[b]);
                let (n, p, q) = (na.shape[0], na.shape[1], nb.shape[1]);
                if wants(a) {
                    // g [n,q] · bᵀ [q,p]
                    let bt = transpose_raw(&nb.data, p, q);
                    accumulate(grads, a, matmul_raw(g, &bt, n, q, p));
                }
                if wants(b) {
                    // aᵀ [p,n] · g [n,q]
                    let at_ = transpose_raw(&na.data, n, p);
                    accumulate(grads, b, matmul_raw(&at_, g, p, n, q));
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (node.shape[0], node.shape[1]);
                accumulate(grads, a, transpose_raw(g, r, c));
            }
            Op::AddRow(a, bias) => {
                if wants(a) {
                    accumulate(grads, a, g.to_vec());
                }
                if wants(bias) {
                    let q = self.nodes[bias].data.len();
                    let mut gb = vec![0.0; q];
                    for (k, &gk) in g.iter().enumerate() {
                        gb[k % q] += gk;
                    }
                    accumulate(grads, bias, gb);
                }
            }
            Op::Reduce(kind, a, axis) => {
                let na = &self.nodes[a];
                let len = match axis {
                    None => na.data.len(),
                    Some(ax) => na.shape[ax],
                };
                let factor = match kind {
                    Reduce::Sum => 1.0,
                    Reduce::Mean => 1.0 / len as f64,
                };
                let gi = match axis {
                    None => vec![g[0] * factor; na.data.len()],
                    Some(ax) => {
                        let (outer, len, inner) = split_axis(&na.shape, ax);
                        let mut out = vec![0.0; na.data.len()];
                        for o in 0..outer {
                            for l in 0..len {
                                for k in 0..inner {
                                    out[(o * len + l) * inner + k] = g[o * inner + k] * factor;
                                }
                            }
                        }
                        out
                    }
                };
                accumulate(grads, a, gi);
            }
        }
    }
}

fn at(data: &[f64], i: usize) -> f64 {
    if data.len() == 1 {
        data[0]
    } else {
        data[i]
    }
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    if a == b || numel(b) == 1 {
        Some(a.to_vec())
    } else if numel(a) == 1 {
        Some(b.to_vec())
    } else {
        None
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn accumulate(grads: &mut [Option<Vec<f64>>], j: usize, g: Vec<f64>) {
    match &mut grads[j] {
        Some(existing) => existing.iter_mut().zip(&g).for_each(|(e, v)| *e += v),
        slot @ None => *slot = Some(g),
    }
}

fn accumulate_broadcast(grads: &mut [Option<Vec<f64>>], j: usize, len: usize, g: Vec<f64>) {
    if len == 1 && g.len() != 1 {
        accumulate(grads, j, vec![g.iter().sum()]);
    } else {
        accumulate(grads, j, g);
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], n: usize, p: usize, q: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * q];
    for i in 0..n {
        let row = &mut out[i * q..(i + 1) * q];
        for k in 0..p {
            let aik = a[i * p + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[k * q..(k + 1) * q];
            for (o, &bkj) in row.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}
