use alloc::vec;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::{invalid, Error, Result};
use crate::rng;
use rand::Rng as _;

/// Floor applied to `ln` inputs and to norms before division.
pub const EPS_FLOOR: f64 = 1e-12;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    AddRow(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Exp(Var),
    Ln(Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    SqNorm(Var),
    NormalizeRows(Var),
    Softmax {
        x: Var,
        tau: f64,
    },
    LogSoftmax {
        x: Var,
        tau: f64,
        mask: Option<Vec<bool>>,
    },
    Gelu(Var),
    Relu(Var),
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    ConcatRows(Vec<Var>),
    GatherRows {
        x: Var,
        idx: Vec<usize>,
    },
    Gather {
        x: Var,
        idx: Vec<usize>,
    },
    GradReverse {
        x: Var,
        mu: f64,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Computation trace for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it
/// and the trace is acyclic by construction. A graph is single-owner; build a
/// fresh one per loss evaluation.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every gradient-requiring leaf.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    entries: Vec<(Var, Tensor)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.entries
            .binary_search_by_key(&v, |(k, _)| *k)
            .ok()
            .map(|i| &self.entries[i].1)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor)> {
        self.entries.iter().map(|(v, t)| (*v, t))
    }
}

fn rows_cols(t: &Tensor) -> (usize, usize) {
    let c = t.cols();
    (t.len() / c, c)
}

fn row_reduced_shape(t: &Tensor) -> Vec<usize> {
    if t.shape().len() >= 2 {
        t.shape()[..t.shape().len() - 1].to_vec()
    } else {
        Vec::new()
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / core::f64::consts::SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * core::f64::consts::PI)
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, mut t: Tensor, requires_grad: bool) -> Result<Var> {
        t.check_finite("leaf input")?;
        t.requires_grad = requires_grad;
        t.grad = None;
        Ok(self.push(Op::Leaf, t, requires_grad))
    }

    /// Registers a gradient-requiring leaf.
    pub fn param(&mut self, t: Tensor) -> Result<Var> {
        self.leaf(t, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.leaf(t, false)
    }

    /// Leaf honouring the tensor's own `requires_grad` flag.
    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        let rg = t.requires_grad;
        self.leaf(t, rg)
    }

    /// Stop-gradient: a constant leaf holding a copy of `x`'s value.
    pub fn detach(&mut self, x: Var) -> Var {
        let t = self.value(x).clone();
        self.push(Op::Leaf, t, false)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn zip(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Var {
        let ta = self.value(a);
        let tb = self.value(b);
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data).expect("shape preserved");
        let rg = self.rg(&[a, b]);
        self.push(op, t, rg)
    }

    fn map(&mut self, op: Op, x: Var, f: impl Fn(f64) -> f64) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(tx.shape().to_vec(), data).expect("shape preserved");
        let rg = self.rg(&[x]);
        self.push(op, t, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip(Op::Add(a, b), a, b, |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("subtract", a, b)?;
        Ok(self.zip(Op::Sub(a, b), a, b, |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("multiply", a, b)?;
        Ok(self.zip(Op::Mul(a, b), a, b, |x, y| x * y))
    }

    /// Elementwise division; the caller guards the denominator.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("divide", a, b)?;
        Ok(self.zip(Op::Div(a, b), a, b, |x, y| x / y))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.map(Op::Scale(x, s), x, |v| v * s)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    /// `x + c` elementwise.
    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        self.map(Op::Offset(x), x, |v| v + c)
    }

    /// Adds the vector `b` (length = columns) to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tb.shape().len() != 1 || tb.len() != tx.cols() {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: tx.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let c = tx.cols();
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + tb.data()[i % c])
            .collect();
        let t = Tensor::new(tx.shape().to_vec(), data).expect("shape preserved");
        let rg = self.rg(&[x, b]);
        Ok(self.push(Op::AddRow(x, b), t, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let (da, db) = (ta.data(), tb.data());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let av = da[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let brow = &db[p * m..(p + 1) * m];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        let t = Tensor::new(vec![n, m], out).expect("matmul shape");
        let rg = self.rg(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), t, rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.shape().len() != 2 {
            return Err(invalid("transpose needs a matrix"));
        }
        let (r, c) = (tx.shape()[0], tx.shape()[1]);
        let d = tx.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        let t = Tensor::new(vec![c, r], out).expect("transpose shape");
        let rg = self.rg(&[x]);
        Ok(self.push(Op::Transpose(x), t, rg))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(Op::Exp(x), x, libm::exp)
    }

    /// Natural log with the input floored at [`EPS_FLOOR`].
    pub fn ln(&mut self, x: Var) -> Var {
        self.map(Op::Ln(x), x, |v| libm::log(v.max(EPS_FLOOR)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Op::Sum(x), Tensor::scalar(s), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(&[x]);
        self.push(Op::Mean(x), Tensor::scalar(s), rg)
    }

    /// Sum over the last axis.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (_, c) = rows_cols(t);
        let data: Vec<f64> = t.data().chunks(c).map(|r| r.iter().sum()).collect();
        let shape = row_reduced_shape(t);
        let t = Tensor::new(shape, data).expect("row_sum shape");
        let rg = self.rg(&[x]);
        self.push(Op::RowSum(x), t, rg)
    }

    /// Squared L2 norm of the whole tensor.
    pub fn sq_norm(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        let rg = self.rg(&[x]);
        self.push(Op::SqNorm(x), Tensor::scalar(s), rg)
    }

    /// Squared L2 norm of each row.
    pub fn row_sq_norm(&mut self, x: Var) -> Result<Var> {
        let sq = self.mul(x, x)?;
        Ok(self.row_sum(sq))
    }

    /// L2-normalizes every row; norms are floored at [`EPS_FLOOR`].
    pub fn normalize_rows(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (_, c) = rows_cols(t);
        let mut out = Vec::with_capacity(t.len());
        for r in t.data().chunks(c) {
            let n = libm::sqrt(r.iter().map(|v| v * v).sum::<f64>()).max(EPS_FLOOR);
            out.extend(r.iter().map(|v| v / n));
        }
        let t = Tensor::new(t.shape().to_vec(), out).expect("shape preserved");
        let rg = self.rg(&[x]);
        self.push(Op::NormalizeRows(x), t, rg)
    }

    /// Row-wise cosine similarity matrix between rows of `a` and rows of `b`.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        let na = self.normalize_rows(a);
        let nb = self.normalize_rows(b);
        let nbt = self.transpose(nb)?;
        self.matmul(na, nbt)
    }

    fn check_tau(tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("temperature must be positive"));
        }
        Ok(())
    }

    /// Row-wise `softmax(x / tau)`.
    pub fn softmax(&mut self, x: Var, tau: f64) -> Result<Var> {
        Self::check_tau(tau)?;
        let t = self.value(x);
        let (_, c) = rows_cols(t);
        let mut out = Vec::with_capacity(t.len());
        for r in t.data().chunks(c) {
            let m = r.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v / tau));
            let start = out.len();
            out.extend(r.iter().map(|&v| libm::exp(v / tau - m)));
            let z: f64 = out[start..].iter().sum();
            out[start..].iter_mut().for_each(|v| *v /= z);
        }
        let t = Tensor::new(t.shape().to_vec(), out).expect("shape preserved");
        let rg = self.rg(&[x]);
        Ok(self.push(Op::Softmax { x, tau }, t, rg))
    }

    /// Row-wise `log_softmax(x / tau)`.
    pub fn log_softmax(&mut self, x: Var, tau: f64) -> Result<Var> {
        self.log_softmax_impl(x, tau, None)
    }

    /// Row-wise `log_softmax(x / tau)` where entries with `exclude[i] == true`
    /// are left out of the normalizer. Excluded entries read as 0 and receive
    /// no gradient.
    pub fn log_softmax_masked(&mut self, x: Var, tau: f64, exclude: Vec<bool>) -> Result<Var> {
        if exclude.len() != self.value(x).len() {
            return Err(Error::ShapeMismatch {
                op: "log_softmax_masked",
                lhs: self.shape(x).to_vec(),
                rhs: vec![exclude.len()],
            });
        }
        self.log_softmax_impl(x, tau, Some(exclude))
    }

    fn log_softmax_impl(&mut self, x: Var, tau: f64, mask: Option<Vec<bool>>) -> Result<Var> {
        Self::check_tau(tau)?;
        let t = self.value(x);
        let (_, c) = rows_cols(t);
        let keep = |i: usize| mask.as_ref().is_none_or(|m| !m[i]);
        let mut out = vec![0.0; t.len()];
        for (ri, r) in t.data().chunks(c).enumerate() {
            let base = ri * c;
            let m = (0..c)
                .filter(|&j| keep(base + j))
                .fold(f64::NEG_INFINITY, |m, j| m.max(r[j] / tau));
            if m == f64::NEG_INFINITY {
                continue;
            }
            let lse = m + libm::log(
                (0..c)
                    .filter(|&j| keep(base + j))
                    .map(|j| libm::exp(r[j] / tau - m))
                    .sum::<f64>(),
            );
            for j in (0..c).filter(|&j| keep(base + j)) {
                out[base + j] = r[j] / tau - lse;
            }
        }
        let t = Tensor::new(t.shape().to_vec(), out).expect("shape preserved");
        let rg = self.rg(&[x]);
        Ok(self.push(Op::LogSoftmax { x, tau, mask }, t, rg))
    }

    /// Per-row cross-entropy `-Σ_k target_k ln(prob_k)` with floored log.
    pub fn cross_entropy(&mut self, probs: Var, targets: Var) -> Result<Var> {
        let lp = self.ln(probs);
        let prod = self.mul(targets, lp)?;
        let s = self.row_sum(prod);
        Ok(self.neg(s))
    }

    /// Per-row cross-entropy against `softmax(logits / tau)`, computed in log space.
    pub fn cross_entropy_logits(&mut self, logits: Var, targets: Var, tau: f64) -> Result<Var> {
        let lp = self.log_softmax(logits, tau)?;
        let prod = self.mul(targets, lp)?;
        let s = self.row_sum(prod);
        Ok(self.neg(s))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.map(Op::Gelu(x), x, |v| v * std_normal_cdf(v))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(Op::Relu(x), x, |v| v.max(0.0))
    }

    /// Inverted dropout. Identity when `training` is false or `rate` is 0.
    pub fn dropout(&mut self, x: Var, rate: f64, seed: u64, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(invalid("dropout rate must lie in [0, 1)"));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let mut r = rng::rng_for(seed, &[rng::TAG_DROPOUT]);
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| if r.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let t = self.value(x);
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let t = Tensor::new(t.shape().to_vec(), data).expect("shape preserved");
        let rg = self.rg(&[x]);
        Ok(self.push(Op::Dropout { x, mask }, t, rg))
    }

    /// Stacks matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| invalid("concat of nothing"))?;
        let c = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() != 2 || t.cols() != c {
                return Err(Error::ShapeMismatch {
                    op: "concatenate",
                    lhs: self.shape(first).to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let t = Tensor::new(vec![rows, c], data).expect("concat shape");
        let rg = self.rg(parts);
        Ok(self.push(Op::ConcatRows(parts.to_vec()), t, rg))
    }

    /// Selects rows of a matrix (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 || idx.is_empty() {
            return Err(invalid("gather_rows needs a matrix and a nonempty index"));
        }
        let r = t.rows();
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(invalid(alloc::format!("row {bad} out of range {r}")));
        }
        let mut data = Vec::with_capacity(idx.len() * t.cols());
        for &i in idx {
            data.extend_from_slice(t.row(i));
        }
        let t = Tensor::new(vec![idx.len(), t.cols()], data).expect("gather shape");
        let rg = self.rg(&[x]);
        Ok(self.push(
            Op::GatherRows {
                x,
                idx: idx.to_vec(),
            },
            t,
            rg,
        ))
    }

    /// Selects flat elements into a vector.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if idx.is_empty() || idx.iter().any(|&i| i >= t.len()) {
            return Err(invalid("gather index out of range"));
        }
        let data = idx.iter().map(|&i| t.data()[i]).collect();
        let rg = self.rg(&[x]);
        Ok(self.push(
            Op::Gather {
                x,
                idx: idx.to_vec(),
            },
            Tensor::vector(data),
            rg,
        ))
    }

    /// Identity forward; the backward pass multiplies the upstream gradient by `-mu`.
    pub fn grad_reverse(&mut self, x: Var, mu: f64) -> Result<Var> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(invalid("gradient reversal coefficient must be positive"));
        }
        let t = self.value(x).clone();
        let rg = self.rg(&[x]);
        Ok(self.push(Op::GradReverse { x, mu }, t, rg))
    }

    /// Reverse-mode sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rnode = self.nodes.get(root.0).ok_or(Error::UnknownNode(root.0))?;
        if !rnode.value.is_scalar() {
            return Err(Error::NonScalarRoot(rnode.value.shape().to_vec()));
        }
        if !rnode.requires_grad {
            return Ok(Gradients::default());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }

        let entries = self
            .nodes
            .iter()
            .enumerate()
            .take(root.0 + 1)
            .filter(|(_, n)| n.requires_grad && matches!(n.op, Op::Leaf))
            .filter_map(|(i, n)| {
                grads[i].take().map(|g| {
                    (
                        Var(i),
                        Tensor::new(n.value.shape().to_vec(), g).expect("grad shape"),
                    )
                })
            })
            .collect();
        Ok(Gradients { entries })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
            f(slot);
        };
        let val = |v: Var| nodes[v.0].value.data();
        let out = node.value.data();

        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += g));
                acc(*b, &mut |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += g));
                acc(*b, &mut |s| s.iter_mut().zip(g).for_each(|(s, g)| *s -= g));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * vb[k];
                    }
                });
                acc(*b, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * va[k];
                    }
                });
            }
            Op::Div(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] / vb[k];
                    }
                });
                acc(*b, &mut |s| {
                    for k in 0..s.len() {
                        s[k] -= g[k] * va[k] / (vb[k] * vb[k]);
                    }
                });
            }
            Op::Scale(x, c) => {
                acc(*x, &mut |s| {
                    s.iter_mut().zip(g).for_each(|(s, g)| *s += c * g)
                });
            }
            Op::Offset(x) => {
                acc(*x, &mut |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += g));
            }
            Op::AddRow(x, b) => {
                acc(*x, &mut |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += g));
                let c = node.value.cols();
                acc(*b, &mut |s| {
                    for (k, gv) in g.iter().enumerate() {
                        s[k % c] += gv;
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                let (da, db) = (ta.data(), tb.data());
                acc(*a, &mut |s| {
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let brow = &db[p * m..(p + 1) * m];
                            s[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                acc(*b, &mut |s| {
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let av = da[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            let srow = &mut s[p * m..(p + 1) * m];
                            srow.iter_mut().zip(grow).for_each(|(s, g)| *s += av * g);
                        }
                    }
                });
            }
            Op::Transpose(x) => {
                let (r, c) = (node.value.shape()[1], node.value.shape()[0]);
                acc(*x, &mut |s| {
                    for i in 0..r {
                        for j in 0..c {
                            s[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::Exp(x) => {
                acc(*x, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * out[k];
                    }
                });
            }
            Op::Ln(x) => {
                let vx = val(*x);
                acc(*x, &mut |s| {
                    for k in 0..s.len() {
                        if vx[k] > EPS_FLOOR {
                            s[k] += g[k] / vx[k];
                        }
                    }
                });
            }
            Op::Sum(x) => {
                acc(*x, &mut |s| s.iter_mut().for_each(|s| *s += g[0]));
            }
            Op::Mean(x) => {
                let n = nodes[x.0].value.len() as f64;
                acc(*x, &mut |s| s.iter_mut().for_each(|s| *s += g[0] / n));
            }
            Op::RowSum(x) => {
                let c = nodes[x.0].value.cols();
                acc(*x, &mut |s| {
                    for (k, s) in s.iter_mut().enumerate() {
                        *s += g[k / c];
                    }
                });
            }
            Op::SqNorm(x) => {
                let vx = val(*x);
                acc(*x, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += 2.0 * vx[k] * g[0];
                    }
                });
            }
            Op::NormalizeRows(x) => {
                let vx = val(*x);
                let c = node.value.cols();
                acc(*x, &mut |s| {
                    for r in 0..vx.len() / c {
                        let span = r * c..(r + 1) * c;
                        let xr = &vx[span.clone()];
                        let yr = &out[span.clone()];
                        let gr = &g[span.clone()];
                        let n = libm::sqrt(xr.iter().map(|v| v * v).sum::<f64>());
                        let sr = &mut s[span];
                        if n > EPS_FLOOR {
                            let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                            for j in 0..c {
                                sr[j] += (gr[j] - yr[j] * dot) / n;
                            }
                        } else {
                            for j in 0..c {
                                sr[j] += gr[j] / EPS_FLOOR;
                            }
                        }
                    }
                });
            }
            Op::Softmax { x, tau } => {
                let c = node.value.cols();
                acc(*x, &mut |s| {
                    for r in 0..out.len() / c {
                        let span = r * c..(r + 1) * c;
                        let yr = &out[span.clone()];
                        let gr = &g[span.clone()];
                        let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                        let sr = &mut s[span];
                        for j in 0..c {
                            sr[j] += yr[j] * (gr[j] - dot) / tau;
                        }
                    }
                });
            }
            Op::LogSoftmax { x, tau, mask } => {
                let c = node.value.cols();
                let keep = |i: usize| mask.as_ref().is_none_or(|m| !m[i]);
                acc(*x, &mut |s| {
                    for r in 0..out.len() / c {
                        let base = r * c;
                        let gs: f64 = (0..c)
                            .filter(|&j| keep(base + j))
                            .map(|j| g[base + j])
                            .sum();
                        for j in (0..c).filter(|&j| keep(base + j)) {
                            let p = libm::exp(out[base + j]);
                            s[base + j] += (g[base + j] - p * gs) / tau;
                        }
                    }
                });
            }
            Op::Gelu(x) => {
                let vx = val(*x);
                acc(*x, &mut |s| {
                    for k in 0..s.len() {
                        let v = vx[k];
                        s[k] += g[k] * (std_normal_cdf(v) + v * std_normal_pdf(v));
                    }
                });
            }
            Op::Relu(x) => {
                let vx = val(*x);
                acc(*x, &mut |s| {
                    for k in 0..s.len() {
                        if vx[k] > 0.0 {
                            s[k] += g[k];
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => {
                acc(*x, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * mask[k];
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = nodes[p.0].value.len();
                    let gp = &g[offset..offset + len];
                    acc(*p, &mut |s| s.iter_mut().zip(gp).for_each(|(s, g)| *s += g));
                    offset += len;
                }
            }
            Op::GatherRows { x, idx } => {
                let c = node.value.cols();
                acc(*x, &mut |s| {
                    for (k, &row) in idx.iter().enumerate() {
                        for j in 0..c {
                            s[row * c + j] += g[k * c + j];
                        }
                    }
                });
            }
            Op::Gather { x, idx } => {
                acc(*x, &mut |s| {
                    for (k, &i) in idx.iter().enumerate() {
                        s[i] += g[k];
                    }
                });
            }
            Op::GradReverse { x, mu } => {
                acc(*x, &mut |s| {
                    s.iter_mut().zip(g).for_each(|(s, g)| *s -= mu * g)
                });
            }
        }
    }
}
