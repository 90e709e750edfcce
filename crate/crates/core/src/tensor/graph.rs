//! Reverse-mode tape.
//!
//! Nodes are appended in evaluation order, so the node vector is already a
//! topological order and the backward sweep simply walks it in reverse. A node
//! consumed by several ops receives the sum of their contributions.

use statrs::function::gamma::{digamma, ln_gamma};

use super::ops::{self, axis_split, Activation};
use super::{Result, Tensor, TensorError};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    AddRowBias { x: Var, bias: Var },
    MatMul(Var, Var),
    Conv1xk { input: Var, kernel: Var, bias: Var },
    Concat { parts: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Reshape(Var),
    SwapLast2(Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Softmax { x: Var, axis: usize },
    Log(Var),
    LnGamma(Var),
    Sum(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::AddRowBias { .. } => "add_row_bias",
            Op::MatMul(..) => "matmul",
            Op::Conv1xk { .. } => "conv1xk",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape(_) => "reshape",
            Op::SwapLast2(_) => "swap_last2",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Softmax { .. } => "softmax",
            Op::Log(_) => "log",
            Op::LnGamma(_) => "ln_gamma",
            Op::Sum(_) => "sum",
        }
    }
}

/// Where a forward value first went non-finite.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Poison {
    op: &'static str,
    index: usize,
    value: f64,
}

#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    poison: Option<Poison>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Leaf that does not receive a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf that receives a gradient.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Errors if any forward value so far contains NaN or Inf, naming the
    /// first op that produced one.
    pub fn check_finite(&self) -> Result<()> {
        match self.poison {
            None => Ok(()),
            Some(Poison { op, index, value }) => Err(TensorError::NonFiniteResult { op, index, value }),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        if self.poison.is_none() {
            if let Some((index, v)) = value.first_non_finite() {
                self.poison = Some(Poison {
                    op: op.name(),
                    index,
                    value: v,
                });
            }
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let t = Tensor::from_parts(x.shape().to_vec(), data);
        let rg = self.needs(&[a, b]);
        self.push(t, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |p, q| p + q))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |p, q| p - q))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |p, q| p * q))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a).map(|v| v * c);
        let rg = self.needs(&[a]);
        self.push(t, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a).map(|v| v + c);
        let rg = self.needs(&[a]);
        self.push(t, Op::AddScalar(a), rg)
    }

    /// `x[r, c] + bias[c]` for a rank-2 `x`.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xs, bs) = (self.shape(x), self.shape(bias));
        if xs.len() != 2 || bs != [xs[1]] {
            return Err(TensorError::ShapeMismatch {
                op: "add_row_bias",
                left: xs.to_vec(),
                right: bs.to_vec(),
            });
        }
        let cols = xs[1];
        let b = self.value(bias).data().to_vec();
        let xv = self.value(x);
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + b[i % cols])
            .collect();
        let t = Tensor::from_parts(xv.shape().to_vec(), data);
        let rg = self.needs(&[x, bias]);
        Ok(self.push(t, Op::AddRowBias { x, bias }, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = ops::matmul_unchecked(self.value(a), self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(t, Op::MatMul(a, b), rg))
    }

    /// `x @ w + b` for `x: [rows, in]`, `w: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row_bias(xw, b)
    }

    /// See [`ops::conv1xk`].
    pub fn conv1xk(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let t = ops::conv1xk_unchecked(self.value(input), self.value(kernel), self.value(bias))?;
        let rg = self.needs(&[input, kernel, bias]);
        Ok(self.push(t, Op::Conv1xk { input, kernel, bias }, rg))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|v| self.value(*v)).collect();
        let t = ops::concat(&values, axis)?;
        let rg = self.needs(parts);
        Ok(self.push(
            t,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let t = ops::slice(self.value(x), axis, start, len)?;
        let rg = self.needs(&[x]);
        Ok(self.push(t, Op::Slice { x, axis, start }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).reshape(shape)?;
        let rg = self.needs(&[x]);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    pub fn swap_last2(&mut self, x: Var) -> Result<Var> {
        let t = ops::swap_last2(self.value(x))?;
        let rg = self.needs(&[x]);
        Ok(self.push(t, Op::SwapLast2(x), rg))
    }

    pub fn activate(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let t = ops::activate_unchecked(self.value(x), kind)?;
        let op = match kind {
            Activation::Tanh => Op::Tanh(x),
            Activation::Relu => Op::Relu(x),
            Activation::Sigmoid => Op::Sigmoid(x),
            Activation::Softmax(axis) => Op::Softmax { x, axis },
        };
        let rg = self.needs(&[x]);
        Ok(self.push(t, op, rg))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activate(x, Activation::Tanh).expect("elementwise")
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activate(x, Activation::Relu).expect("elementwise")
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activate(x, Activation::Sigmoid).expect("elementwise")
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.activate(x, Activation::Softmax(axis))
    }

    /// Natural log; every entry must be positive.
    pub fn log(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if let Some(bad) = xv.data().iter().find(|v| **v <= 0.0) {
            return Err(TensorError::Invalid {
                op: "log",
                msg: format!("non-positive argument {bad}"),
            });
        }
        let t = xv.map(f64::ln);
        let rg = self.needs(&[x]);
        Ok(self.push(t, Op::Log(x), rg))
    }

    /// `ln Γ(x)` elementwise; every entry must be positive.
    pub fn ln_gamma(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if let Some(bad) = xv.data().iter().find(|v| **v <= 0.0) {
            return Err(TensorError::Invalid {
                op: "ln_gamma",
                msg: format!("non-positive argument {bad}"),
            });
        }
        let t = xv.map(ln_gamma);
        let rg = self.needs(&[x]);
        Ok(self.push(t, Op::LnGamma(x), rg))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let t = Tensor::scalar(self.value(x).sum());
        let rg = self.needs(&[x]);
        self.push(t, Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Reverse sweep from a scalar `loss`. Fails if any forward value is
    /// non-finite.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check_finite()?;
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::ones(lv.shape()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, contrib: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, c) in existing.data.iter_mut().zip(contrib) {
                    *e += c;
                }
            }
            slot @ None => {
                *slot = Some(Tensor::from_parts(self.shape(v).to_vec(), contrib));
            }
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        let out = node.value.data();
        let elementwise = |f: &dyn Fn(usize) -> f64| (0..gd.len()).map(f).collect::<Vec<_>>();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gd.to_vec());
                self.accumulate(grads, *b, gd.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, gd.to_vec());
                self.accumulate(grads, *b, gd.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, elementwise(&|i| gd[i] * bv[i]));
                self.accumulate(grads, *b, elementwise(&|i| gd[i] * av[i]));
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, gd.iter().map(|v| v * c).collect()),
            Op::AddScalar(a) => self.accumulate(grads, *a, gd.to_vec()),
            Op::AddRowBias { x, bias } => {
                self.accumulate(grads, *x, gd.to_vec());
                let cols = self.shape(*bias)[0];
                let mut gb = vec![0.0; cols];
                for (i, v) in gd.iter().enumerate() {
                    gb[i % cols] += v;
                }
                self.accumulate(grads, *bias, gb);
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (n, k, m) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.nodes[a.0].requires_grad {
                    // dA = G Bᵀ
                    let mut ga = vec![0.0; n * k];
                    for i in 0..n {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..m {
                                acc += gd[i * m + j] * bv.data()[p * m + j];
                            }
                            ga[i * k + p] = acc;
                        }
                    }
                    self.accumulate(grads, *a, ga);
                }
                if self.nodes[b.0].requires_grad {
                    // dB = Aᵀ G
                    let mut gb = vec![0.0; k * m];
                    for i in 0..n {
                        for p in 0..k {
                            let aip = av.data()[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            for j in 0..m {
                                gb[p * m + j] += aip * gd[i * m + j];
                            }
                        }
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Conv1xk { input, kernel, bias } => {
                let (x, w) = (self.value(*input), self.value(*kernel));
                let [c, rows, len, o, k, out_len] =
                    ops::conv_dims(x, w, self.value(*bias)).expect("checked in forward");
                let mut gx = vec![0.0; x.len()];
                let mut gw = vec![0.0; w.len()];
                let mut gbias = vec![0.0; o];
                for oc in 0..o {
                    for r in 0..rows {
                        let grow = &gd[(oc * rows + r) * out_len..(oc * rows + r + 1) * out_len];
                        gbias[oc] += grow.iter().sum::<f64>();
                        for ic in 0..c {
                            let xoff = (ic * rows + r) * len;
                            let woff = (oc * c + ic) * k;
                            for (t, &gv) in grow.iter().enumerate() {
                                if gv == 0.0 {
                                    continue;
                                }
                                for j in 0..k {
                                    gx[xoff + t + j] += w.data()[woff + j] * gv;
                                    gw[woff + j] += x.data()[xoff + t + j] * gv;
                                }
                            }
                        }
                    }
                }
                self.accumulate(grads, *input, gx);
                self.accumulate(grads, *kernel, gw);
                self.accumulate(grads, *bias, gbias);
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = axis_split(g.shape(), *axis);
                let mut offset = 0;
                for p in parts {
                    let len = self.shape(*p)[*axis];
                    let mut gp = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let base = (o * total + offset) * inner;
                        gp.extend_from_slice(&gd[base..base + len * inner]);
                    }
                    self.accumulate(grads, *p, gp);
                    offset += len;
                }
            }
            Op::Slice { x, axis, start } => {
                let xs = self.shape(*x);
                let (outer, full, inner) = axis_split(xs, *axis);
                let len = g.shape()[*axis];
                let mut gx = vec![0.0; xs.iter().product()];
                for o in 0..outer {
                    let dst = (o * full + start) * inner;
                    let src = o * len * inner;
                    gx[dst..dst + len * inner].copy_from_slice(&gd[src..src + len * inner]);
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Reshape(x) => self.accumulate(grads, *x, gd.to_vec()),
            Op::SwapLast2(x) => {
                let back = ops::swap_last2(g).expect("rank 3");
                self.accumulate(grads, *x, back.into_data());
            }
            Op::Tanh(x) => self.accumulate(grads, *x, elementwise(&|i| gd[i] * (1.0 - out[i] * out[i]))),
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                self.accumulate(grads, *x, elementwise(&|i| if xv[i] > 0.0 { gd[i] } else { 0.0 }));
            }
            Op::Sigmoid(x) => {
                self.accumulate(grads, *x, elementwise(&|i| gd[i] * out[i] * (1.0 - out[i])))
            }
            Op::Softmax { x, axis } => {
                let (outer, len, inner) = axis_split(g.shape(), *axis);
                let mut gx = vec![0.0; gd.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * len + k) * inner + i;
                        let dot: f64 = (0..len).map(|k| gd[at(k)] * out[at(k)]).sum();
                        for k in 0..len {
                            gx[at(k)] = out[at(k)] * (gd[at(k)] - dot);
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Log(x) => {
                let xv = self.value(*x).data();
                self.accumulate(grads, *x, elementwise(&|i| gd[i] / xv[i]));
            }
            Op::LnGamma(x) => {
                let xv = self.value(*x).data();
                self.accumulate(grads, *x, elementwise(&|i| gd[i] * digamma(xv[i])));
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, vec![gd[0]; n]);
            }
        }
    }
}
