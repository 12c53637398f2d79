//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Every backward rule is written in terms of the same differentiable
//! operations used in the forward pass. Calling [`grad`] with
//! `create_graph = true` therefore records the gradient computation itself,
//! and the returned gradients can be differentiated again. This is what
//! second-order MAML needs: the inner-loop updates stay on the graph and the
//! meta-gradient flows back through them.
//!
//! With `create_graph = false` the backward rules run on detached values and
//! produce constants, which keeps first-order work cheap.
//!
//! Shape mismatches inside this module are programming errors and panic;
//! public entry points above it (networks, losses) validate shapes first.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::ops;
use std::rc::Rc;

use super::tensor::{matmul_raw, numel, transpose_raw, Tensor};
use crate::error::{dim_err, Result};

/// Marks an output position of a gather that reads zero (e.g. conv padding).
pub const NO_SOURCE: usize = usize::MAX;

/// Index table shared by [`Var::gather`] and [`Var::scatter_add`].
///
/// `gather`: `out[k] = input[src[k]]`, input shaped `in_shape`, output shaped `out_shape`.
/// `scatter_add`: `out[src[k]] += input[k]`, input shaped `out_shape`, output shaped `in_shape`.
///
/// The two are adjoint, so each is the other's backward rule.
#[derive(Debug)]
pub struct IndexMap {
    src: Vec<usize>,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
}

impl IndexMap {
    pub fn new(src: Vec<usize>, in_shape: Vec<usize>, out_shape: Vec<usize>) -> Rc<Self> {
        assert_eq!(src.len(), numel(&out_shape), "index map length vs out shape {out_shape:?}");
        let n_in = numel(&in_shape);
        assert!(src.iter().all(|&s| s == NO_SOURCE || s < n_in), "index map reads outside input of shape {in_shape:?}");
        Rc::new(IndexMap { src, in_shape, out_shape })
    }

    pub fn src(&self) -> &[usize] {
        &self.src
    }
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Sigmoid(Var),
    Mask(Var, Rc<[f64]>),
    MatMul(Var, Var),
    Transpose(Var),
    Gather(Var, Rc<IndexMap>),
    Scatter(Var, Rc<IndexMap>),
    Reshape(Var),
}

impl Op {
    fn parents(&self) -> [Option<&Var>; 2] {
        use Op::*;
        match self {
            Leaf => [None, None],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | MatMul(a, b) => [Some(a), Some(b)],
            Scale(a, _)
            | Shift(a)
            | Exp(a)
            | Ln(a)
            | Sqrt(a)
            | Sigmoid(a)
            | Mask(a, _)
            | Transpose(a)
            | Gather(a, _)
            | Scatter(a, _)
            | Reshape(a) => [Some(a), None],
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// A node in the differentiation graph. Cloning is cheap (reference counted).
#[derive(Clone)]
pub struct Var(Rc<Node>);

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var").field("shape", &self.shape()).field("requires_grad", &self.requires_grad()).finish()
    }
}

impl Var {
    fn make(value: Tensor, op: Op) -> Var {
        let requires_grad = op.parents().iter().flatten().any(|p| p.requires_grad());
        let op = if requires_grad { op } else { Op::Leaf };
        Var(Rc::new(Node { value: Rc::new(value), op, requires_grad }))
    }

    /// A value that gradients do not flow into.
    pub fn constant(value: Tensor) -> Var {
        Var(Rc::new(Node { value: Rc::new(value), op: Op::Leaf, requires_grad: false }))
    }

    /// A leaf that gradients are tracked for.
    pub fn parameter(value: Tensor) -> Var {
        Var(Rc::new(Node { value: Rc::new(value), op: Op::Leaf, requires_grad: true }))
    }

    /// Same value, cut from the graph.
    pub fn detach(&self) -> Var {
        Var(Rc::new(Node { value: Rc::clone(&self.0.value), op: Op::Leaf, requires_grad: false }))
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn key(&self) -> *const Node {
        Rc::as_ptr(&self.0)
    }

    fn data(&self) -> &[f64] {
        self.0.value.data()
    }

    fn zip_with(&self, other: &Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "{what}: shape mismatch");
        let data = self.data().iter().zip(other.data()).map(|(&a, &b)| f(a, b)).collect();
        Tensor::from_parts(self.shape().to_vec(), data)
    }

    fn map_value(&self, f: impl Fn(f64) -> f64) -> Tensor {
        self.value().map(f)
    }

    pub fn add(&self, other: &Var) -> Var {
        Var::make(self.zip_with(other, "add", |a, b| a + b), Op::Add(self.clone(), other.clone()))
    }

    pub fn sub(&self, other: &Var) -> Var {
        Var::make(self.zip_with(other, "sub", |a, b| a - b), Op::Sub(self.clone(), other.clone()))
    }

    pub fn mul(&self, other: &Var) -> Var {
        Var::make(self.zip_with(other, "mul", |a, b| a * b), Op::Mul(self.clone(), other.clone()))
    }

    pub fn div(&self, other: &Var) -> Var {
        Var::make(self.zip_with(other, "div", |a, b| a / b), Op::Div(self.clone(), other.clone()))
    }

    pub fn scale(&self, c: f64) -> Var {
        Var::make(self.map_value(|a| a * c), Op::Scale(self.clone(), c))
    }

    /// Add a scalar constant.
    pub fn shift(&self, c: f64) -> Var {
        Var::make(self.map_value(|a| a + c), Op::Shift(self.clone()))
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    pub fn exp(&self) -> Var {
        Var::make(self.map_value(f64::exp), Op::Exp(self.clone()))
    }

    pub fn ln(&self) -> Var {
        Var::make(self.map_value(f64::ln), Op::Ln(self.clone()))
    }

    pub fn sqrt(&self) -> Var {
        Var::make(self.map_value(f64::sqrt), Op::Sqrt(self.clone()))
    }

    pub fn sigmoid(&self) -> Var {
        Var::make(self.map_value(stable_sigmoid), Op::Sigmoid(self.clone()))
    }

    pub fn square(&self) -> Var {
        self.mul(self)
    }

    /// Element-wise product with a constant mask.
    pub fn mask(&self, mask: Rc<[f64]>) -> Var {
        assert_eq!(mask.len(), self.value().len(), "mask length");
        let data = self.data().iter().zip(mask.iter()).map(|(a, m)| a * m).collect();
        Var::make(Tensor::from_parts(self.shape().to_vec(), data), Op::Mask(self.clone(), mask))
    }

    pub fn relu(&self) -> Var {
        self.leaky_relu(0.0)
    }

    pub fn leaky_relu(&self, slope: f64) -> Var {
        let mask: Rc<[f64]> = self.data().iter().map(|&a| if a > 0.0 { 1.0 } else { slope }).collect();
        self.mask(mask)
    }

    pub fn abs(&self) -> Var {
        let mask: Rc<[f64]> = self.data().iter().map(|&a| if a < 0.0 { -1.0 } else { 1.0 }).collect();
        self.mask(mask)
    }

    /// `ln(1 + e^x)`, evaluated stably.
    pub fn softplus(&self) -> Var {
        self.relu().add(&self.abs().neg().exp().shift(1.0).ln())
    }

    /// 2-D matrix product.
    pub fn matmul(&self, other: &Var) -> Var {
        let (a, b) = (self.shape(), other.shape());
        assert!(a.len() == 2 && b.len() == 2 && a[1] == b[0], "matmul {a:?} x {b:?}");
        let (m, k, n) = (a[0], a[1], b[1]);
        let data = matmul_raw(self.data(), other.data(), m, k, n);
        Var::make(Tensor::from_parts(vec![m, n], data), Op::MatMul(self.clone(), other.clone()))
    }

    /// 2-D transpose.
    pub fn t(&self) -> Var {
        let s = self.shape();
        assert_eq!(s.len(), 2, "transpose of {s:?}");
        let data = transpose_raw(self.data(), s[0], s[1]);
        Var::make(Tensor::from_parts(vec![s[1], s[0]], data), Op::Transpose(self.clone()))
    }

    pub fn gather(&self, map: &Rc<IndexMap>) -> Var {
        assert_eq!(self.shape(), map.in_shape.as_slice(), "gather input shape");
        let x = self.data();
        let data = map.src.iter().map(|&s| if s == NO_SOURCE { 0.0 } else { x[s] }).collect();
        Var::make(Tensor::from_parts(map.out_shape.clone(), data), Op::Gather(self.clone(), Rc::clone(map)))
    }

    pub fn scatter_add(&self, map: &Rc<IndexMap>) -> Var {
        assert_eq!(self.shape(), map.out_shape.as_slice(), "scatter input shape");
        let mut out = vec![0.0; numel(&map.in_shape)];
        for (&s, &v) in map.src.iter().zip(self.data()) {
            if s != NO_SOURCE {
                out[s] += v;
            }
        }
        Var::make(Tensor::from_parts(map.in_shape.clone(), out), Op::Scatter(self.clone(), Rc::clone(map)))
    }

    pub fn reshape(&self, shape: &[usize]) -> Var {
        assert_eq!(numel(shape), self.value().len(), "reshape {:?} -> {shape:?}", self.shape());
        let t = Tensor::from_parts(shape.to_vec(), self.data().to_vec());
        Var::make(t, Op::Reshape(self.clone()))
    }

    /// Sum of all entries, shape `[1]`.
    pub fn sum(&self) -> Var {
        let n = self.value().len();
        self.scatter_add(&IndexMap::new(vec![0; n], vec![1], self.shape().to_vec()))
    }

    pub fn mean(&self) -> Var {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// `[n, m] -> [m]`, summing over rows.
    pub fn sum_rows(&self) -> Var {
        let (n, m) = dims2(self.shape());
        self.scatter_add(&IndexMap::new((0..n * m).map(|k| k % m).collect(), vec![m], vec![n, m]))
    }

    /// `[n, m] -> [n]`, summing within each row.
    pub fn sum_cols(&self) -> Var {
        let (n, m) = dims2(self.shape());
        self.scatter_add(&IndexMap::new((0..n * m).map(|k| k / m).collect(), vec![n], vec![n, m]))
    }

    /// `[m] -> [n, m]`, repeating the vector as every row.
    pub fn broadcast_rows(&self, n: usize) -> Var {
        let m = self.value().len();
        self.gather(&IndexMap::new((0..n * m).map(|k| k % m).collect(), self.shape().to_vec(), vec![n, m]))
    }

    /// `[n] -> [n, m]`, repeating each entry along its row.
    pub fn broadcast_cols(&self, m: usize) -> Var {
        let n = self.value().len();
        self.gather(&IndexMap::new((0..n * m).map(|k| k / m).collect(), self.shape().to_vec(), vec![n, m]))
    }

    /// Columns `start..start + len` of a 2-D tensor.
    pub fn slice_cols(&self, start: usize, len: usize) -> Var {
        let (n, m) = dims2(self.shape());
        assert!(start + len <= m, "column slice out of range");
        let src = (0..n).flat_map(|i| (0..len).map(move |j| i * m + start + j)).collect();
        self.gather(&IndexMap::new(src, vec![n, m], vec![n, len]))
    }

    /// Row-wise log-softmax of a `[n, c]` tensor.
    pub fn log_softmax(&self) -> Var {
        let (n, c) = dims2(self.shape());
        let maxes: Vec<f64> =
            (0..n).map(|i| self.data()[i * c..(i + 1) * c].iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        let shift = Var::constant(Tensor::from_parts(vec![n], maxes)).broadcast_cols(c);
        let z = self.sub(&shift);
        let lse = z.exp().sum_cols().ln();
        z.sub(&lse.broadcast_cols(c))
    }
}

fn dims2(shape: &[usize]) -> (usize, usize) {
    assert_eq!(shape.len(), 2, "expected a 2-D tensor, got {shape:?}");
    (shape[0], shape[1])
}

pub(crate) fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ops::Add for &Var {
    type Output = Var;
    fn add(self, rhs: &Var) -> Var {
        Var::add(self, rhs)
    }
}

impl ops::Sub for &Var {
    type Output = Var;
    fn sub(self, rhs: &Var) -> Var {
        Var::sub(self, rhs)
    }
}

impl ops::Mul for &Var {
    type Output = Var;
    fn mul(self, rhs: &Var) -> Var {
        Var::mul(self, rhs)
    }
}

impl ops::Div for &Var {
    type Output = Var;
    fn div(self, rhs: &Var) -> Var {
        Var::div(self, rhs)
    }
}

impl ops::Neg for &Var {
    type Output = Var;
    fn neg(self) -> Var {
        Var::neg(self)
    }
}

/// Vector-Jacobian products of one node. Returns `(parent, contribution)`
/// pairs for parents that require gradients.
fn backward_node(node: &Var, g: &Var, create_graph: bool) -> Vec<(Var, Var)> {
    let keep = |v: &Var| if create_graph { v.clone() } else { v.detach() };
    let mut out = Vec::with_capacity(2);
    let mut push = |p: &Var, contribution: Var| {
        if p.requires_grad() {
            out.push((p.clone(), contribution));
        }
    };
    match &node.0.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            push(a, g.clone());
            push(b, g.clone());
        }
        Op::Sub(a, b) => {
            push(a, g.clone());
            if b.requires_grad() {
                push(b, g.neg());
            }
        }
        Op::Mul(a, b) => {
            if a.requires_grad() {
                push(a, g.mul(&keep(b)));
            }
            if b.requires_grad() {
                push(b, g.mul(&keep(a)));
            }
        }
        Op::Div(a, b) => {
            let bk = keep(b);
            if a.requires_grad() {
                push(a, g.div(&bk));
            }
            if b.requires_grad() {
                push(b, g.mul(&keep(node)).div(&bk).neg());
            }
        }
        Op::Scale(a, c) => push(a, g.scale(*c)),
        Op::Shift(a) => push(a, g.clone()),
        Op::Exp(a) => push(a, g.mul(&keep(node))),
        Op::Ln(a) => push(a, g.div(&keep(a))),
        Op::Sqrt(a) => push(a, g.div(&keep(node)).scale(0.5)),
        Op::Sigmoid(a) => {
            let s = keep(node);
            push(a, g.mul(&s.sub(&s.square())));
        }
        Op::Mask(a, m) => push(a, g.mask(Rc::clone(m))),
        Op::MatMul(a, b) => {
            if a.requires_grad() {
                push(a, g.matmul(&keep(b).t()));
            }
            if b.requires_grad() {
                push(b, keep(a).t().matmul(g));
            }
        }
        Op::Transpose(a) => push(a, g.t()),
        Op::Gather(a, map) => push(a, g.scatter_add(map)),
        Op::Scatter(a, map) => push(a, g.gather(map)),
        Op::Reshape(a) => push(a, g.reshape(a.shape())),
    }
    out
}

/// Gradients of the scalar `output` with respect to each of `wrt`.
///
/// Inputs that `output` does not depend on get zero gradients. With
/// `create_graph` the results are themselves differentiable.
pub fn grad(output: &Var, wrt: &[Var], create_graph: bool) -> Result<Vec<Var>> {
    if output.value().len() != 1 {
        return Err(dim_err(format!("grad needs a scalar output, got shape {:?}", output.shape())));
    }

    // Post-order over the nodes that carry gradient.
    let mut order: Vec<Var> = Vec::new();
    let mut visited: HashSet<*const Node> = HashSet::new();
    let mut stack: Vec<(Var, bool)> = vec![(output.clone(), false)];
    while let Some((v, expanded)) = stack.pop() {
        if expanded {
            order.push(v);
            continue;
        }
        if !v.requires_grad() || !visited.insert(v.key()) {
            continue;
        }
        stack.push((v.clone(), true));
        for p in v.0.op.parents().into_iter().flatten() {
            if p.requires_grad() && !visited.contains(&p.key()) {
                stack.push((p.clone(), false));
            }
        }
    }

    let mut grads: HashMap<*const Node, Var> = HashMap::new();
    grads.insert(output.key(), Var::constant(Tensor::full(output.shape(), 1.0)));
    for node in order.iter().rev() {
        let Some(g) = grads.get(&node.key()).cloned() else {
            continue;
        };
        for (parent, contribution) in backward_node(node, &g, create_graph) {
            let merged = match grads.remove(&parent.key()) {
                Some(existing) => existing.add(&contribution),
                None => contribution,
            };
            grads.insert(parent.key(), merged);
        }
    }

    Ok(wrt
        .iter()
        .map(|w| grads.get(&w.key()).cloned().unwrap_or_else(|| Var::constant(Tensor::zeros(w.shape()))))
        .collect())
}
