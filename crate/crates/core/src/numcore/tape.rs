//! Recorded reverse-mode differentiation over a fixed op vocabulary.
//!
//! A [`Tape`] owns every intermediate value. Ops append a node and return a
//! [`Var`] handle; [`Tape::backward`] walks the nodes in reverse and
//! accumulates adjoints. Nodes created from [`Tape::input`] are constants and
//! never receive gradients, and nothing downstream of constants only is
//! differentiated.

use super::tensor::{matmul_into, matmul_nt_into, matmul_tn_into};
use super::{NumError, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bcast {
    Same,
    Scalar,
    /// `[c]` against `[.., c]`
    Row,
    /// `[r, 1]` against `[r, c]`
    Col,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var, Bcast),
    Sub(Var, Var, Bcast),
    Mul(Var, Var, Bcast),
    Div(Var, Var, Bcast),
    Scale(Var, f64),
    Offset(Var),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Transpose(Var),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm { x: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Sigmoid(Var),
    Gelu(Var),
    Exp(Var),
    Sqrt(Var),
    Reshape(Var),
    Concat(Vec<Var>),
    NarrowCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    SumLastDim(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct TapeGrads {
    grads: Vec<Option<Tensor>>,
}

impl TapeGrads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let th = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Differentiable leaf.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn bcast(&self, a: Var, b: Var, what: &str) -> Result<Bcast, NumError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            return Ok(Bcast::Same);
        }
        let tb = self.value(b);
        let ta = self.value(a);
        if tb.len() == 1 {
            Ok(Bcast::Scalar)
        } else if sb.len() == 1 && sb[0] == ta.last_dim() {
            Ok(Bcast::Row)
        } else if sa.len() == 2 && sb == [sa[0], 1] {
            Ok(Bcast::Col)
        } else {
            Err(NumError::Shape(format!("{what}: cannot broadcast {sb:?} onto {sa:?}")))
        }
    }

    fn binary(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, Bcast), NumError> {
        let bc = self.bcast(a, b, what)?;
        let ta = self.value(a);
        let tb = self.value(b).data();
        let c = ta.last_dim().max(1);
        let data: Vec<f64> = match bc {
            Bcast::Same => ta.data().iter().zip(tb).map(|(&x, &y)| f(x, y)).collect(),
            Bcast::Scalar => ta.data().iter().map(|&x| f(x, tb[0])).collect(),
            Bcast::Row => ta.data().iter().enumerate().map(|(i, &x)| f(x, tb[i % c])).collect(),
            Bcast::Col => ta.data().iter().enumerate().map(|(i, &x)| f(x, tb[i / c])).collect(),
        };
        Ok((Tensor::new(ta.shape(), data)?, bc))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (t, bc) = self.binary(a, b, "add", |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Add(a, b, bc), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (t, bc) = self.binary(a, b, "sub", |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Sub(a, b, bc), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (t, bc) = self.binary(a, b, "mul", |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Mul(a, b, bc), ng))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (t, bc) = self.binary(a, b, "div", |x, y| x / y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Div(a, b, bc), ng))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let t = self.value(a).scale(k);
        let ng = self.ng(a);
        self.push(t, Op::Scale(a, k), ng)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a).map(|v| v + c);
        let ng = self.ng(a);
        self.push(t, Op::Offset(a), ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(NumError::Shape(format!("matmul inner dimensions differ: [{m}, {k}] x [{k2}, {n}]")));
        }
        let t = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let t = self.value(a).matmul_nt(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::MatMulNT(a, b), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NumError> {
        let t = self.value(a).transpose()?;
        let ng = self.ng(a);
        Ok(self.push(t, Op::Transpose(a), ng))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a).softmax_lastdim();
        let ng = self.ng(a);
        self.push(t, Op::Softmax(a), ng)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let t = self.value(a).log_softmax_lastdim();
        let ng = self.ng(a);
        self.push(t, Op::LogSoftmax(a), ng)
    }

    /// Layer normalisation over the last dimension, no affine part.
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let c = x.last_dim();
        let rows = x.rows();
        let mut xhat = vec![0.0; x.len()];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let row = &x.data()[r * c..(r + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[r] = rs;
            for j in 0..c {
                xhat[r * c + j] = (row[j] - mean) * rs;
            }
        }
        let t = Tensor::new(x.shape(), xhat.clone()).expect("same shape");
        let ng = self.ng(a);
        self.push(t, Op::LayerNorm { x: a, xhat, rstd }, ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(sigmoid);
        let ng = self.ng(a);
        self.push(t, Op::Sigmoid(a), ng)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(gelu);
        let ng = self.ng(a);
        self.push(t, Op::Gelu(a), ng)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::exp);
        let ng = self.ng(a);
        self.push(t, Op::Exp(a), ng)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::sqrt);
        let ng = self.ng(a);
        self.push(t, Op::Sqrt(a), ng)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NumError> {
        let t = self.value(a).reshape(shape)?;
        let ng = self.ng(a);
        Ok(self.push(t, Op::Reshape(a), ng))
    }

    /// Concatenation along the last dimension of 2-D operands.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let Some(&first) = parts.first() else {
            return Err(NumError::Shape("concat of zero tensors".into()));
        };
        let rows = self.value(first).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != rows {
                return Err(NumError::Shape(format!("concat row mismatch: {r} vs {rows}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Tensor::new(&[rows, total], data)?, Op::Concat(parts.to_vec()), ng))
    }

    /// Columns `start..start + len` of a 2-D operand.
    pub fn narrow_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumError> {
        let (rows, cols) = self.value(a).dims2()?;
        if start + len > cols {
            return Err(NumError::Shape(format!("narrow {start}+{len} beyond {cols} columns")));
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        let ng = self.ng(a);
        Ok(self.push(Tensor::new(&[rows, len], data)?, Op::NarrowCols(a, start), ng))
    }

    /// Selects rows of a 2-D operand by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, NumError> {
        let (rows, cols) = self.value(a).dims2()?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(NumError::Shape(format!("gather index {bad} out of {rows} rows")));
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(&src[i * cols..(i + 1) * cols]);
        }
        let ng = self.ng(a);
        Ok(self.push(Tensor::new(&[idx.len(), cols], data)?, Op::GatherRows(a, idx.to_vec()), ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(t, Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).mean());
        let ng = self.ng(a);
        self.push(t, Op::Mean(a), ng)
    }

    /// Row sums of a 2-D operand, shape `[rows, 1]`.
    pub fn sum_lastdim(&mut self, a: Var) -> Result<Var, NumError> {
        let (rows, cols) = self.value(a).dims2()?;
        let src = self.value(a).data();
        let data = (0..rows).map(|r| src[r * cols..(r + 1) * cols].iter().sum()).collect();
        let ng = self.ng(a);
        Ok(self.push(Tensor::new(&[rows, 1], data)?, Op::SumLastDim(a), ng))
    }

    /// Reverse pass from a scalar root.
    pub fn backward(&self, root: Var) -> Result<TapeGrads, NumError> {
        if self.value(root).len() != 1 {
            return Err(NumError::NonScalarLoss(self.shape(root).to_vec()));
        }
        self.backward_seeded(&[(root, Tensor::scalar(1.0))])
    }

    /// Reverse pass with explicit upstream adjoints on any number of nodes.
    /// Seeds add up, so a node may appear more than once.
    pub fn backward_seeded(&self, seeds: &[(Var, Tensor)]) -> Result<TapeGrads, NumError> {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut last = 0;
        for (v, g) in seeds {
            if g.len() != self.value(*v).len() {
                return Err(NumError::Shape(format!(
                    "seed shape {:?} for node of shape {:?}",
                    g.shape(),
                    self.shape(*v)
                )));
            }
            let g = g.reshape(self.shape(*v))?;
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&g),
                slot => *slot = Some(g),
            }
            last = last.max(v.0);
        }
        for i in (0..=last).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(TapeGrads { grads })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Tensor>], v: Var) -> &'g mut [f64] {
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.shape(v)));
        }
        slot.as_mut().expect("initialised").data_mut()
    }

    fn reduce_into(&self, grads: &mut [Option<Tensor>], b: Var, bc: Bcast, cols: usize, vals: impl Iterator<Item = f64>) {
        let gb = self.acc(grads, b);
        match bc {
            Bcast::Same => gb.iter_mut().zip(vals).for_each(|(o, v)| *o += v),
            Bcast::Scalar => gb[0] += vals.sum::<f64>(),
            Bcast::Row => vals.enumerate().for_each(|(i, v)| gb[i % cols] += v),
            Bcast::Col => vals.enumerate().for_each(|(i, v)| gb[i / cols] += v),
        }
    }

    fn bval(&self, b: Var, bc: Bcast, cols: usize, i: usize) -> f64 {
        let d = self.value(b).data();
        match bc {
            Bcast::Same => d[i],
            Bcast::Scalar => d[0],
            Bcast::Row => d[i % cols],
            Bcast::Col => d[i / cols],
        }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &self.nodes[i].value;
        let gd = g.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::Add(a, b, bc) => {
                if self.ng(a) {
                    self.acc(grads, a).iter_mut().zip(gd).for_each(|(o, v)| *o += v);
                }
                if self.ng(b) {
                    self.reduce_into(grads, b, bc, y.last_dim(), gd.iter().copied());
                }
            }
            &Op::Sub(a, b, bc) => {
                if self.ng(a) {
                    self.acc(grads, a).iter_mut().zip(gd).for_each(|(o, v)| *o += v);
                }
                if self.ng(b) {
                    self.reduce_into(grads, b, bc, y.last_dim(), gd.iter().map(|v| -v));
                }
            }
            &Op::Mul(a, b, bc) => {
                let c = y.last_dim();
                if self.ng(a) {
                    let vals: Vec<f64> = (0..gd.len()).map(|k| gd[k] * self.bval(b, bc, c, k)).collect();
                    self.acc(grads, a).iter_mut().zip(vals).for_each(|(o, v)| *o += v);
                }
                if self.ng(b) {
                    let ad = self.value(a).data();
                    self.reduce_into(grads, b, bc, c, gd.iter().zip(ad).map(|(g, a)| g * a));
                }
            }
            &Op::Div(a, b, bc) => {
                let c = y.last_dim();
                if self.ng(a) {
                    let vals: Vec<f64> = (0..gd.len()).map(|k| gd[k] / self.bval(b, bc, c, k)).collect();
                    self.acc(grads, a).iter_mut().zip(vals).for_each(|(o, v)| *o += v);
                }
                if self.ng(b) {
                    let vals: Vec<f64> = (0..gd.len())
                        .map(|k| -gd[k] * y.data()[k] / self.bval(b, bc, c, k))
                        .collect();
                    self.reduce_into(grads, b, bc, c, vals.into_iter());
                }
            }
            &Op::Scale(a, k) => {
                self.acc(grads, a).iter_mut().zip(gd).for_each(|(o, v)| *o += k * v);
            }
            &Op::Offset(a) | &Op::Reshape(a) => {
                self.acc(grads, a).iter_mut().zip(gd).for_each(|(o, v)| *o += v);
            }
            &Op::MatMul(a, b) => {
                let (m, k) = self.value(a).dims2().expect("2-D");
                let n = y.last_dim();
                if self.ng(a) {
                    let bd = self.value(b).data();
                    matmul_nt_into(gd, bd, self.acc(grads, a), m, n, k);
                }
                if self.ng(b) {
                    let ad = self.value(a).data();
                    matmul_tn_into(ad, gd, self.acc(grads, b), m, k, n);
                }
            }
            &Op::MatMulNT(a, b) => {
                let (m, k) = self.value(a).dims2().expect("2-D");
                let n = y.last_dim();
                if self.ng(a) {
                    let bd = self.value(b).data();
                    matmul_into(gd, bd, self.acc(grads, a), m, n, k);
                }
                if self.ng(b) {
                    let ad = self.value(a).data();
                    matmul_tn_into(gd, ad, self.acc(grads, b), m, n, k);
                }
            }
            &Op::Transpose(a) => {
                let gt = g.transpose().expect("2-D");
                self.acc(grads, a).iter_mut().zip(gt.data()).for_each(|(o, v)| *o += v);
            }
            &Op::Softmax(a) => {
                let c = y.last_dim();
                let ga = self.acc(grads, a);
                for ((yr, gr), out) in y.data().chunks(c).zip(gd.chunks(c)).zip(ga.chunks_mut(c)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for j in 0..c {
                        out[j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            &Op::LogSoftmax(a) => {
                let c = y.last_dim();
                let ga = self.acc(grads, a);
                for ((yr, gr), out) in y.data().chunks(c).zip(gd.chunks(c)).zip(ga.chunks_mut(c)) {
                    let gs: f64 = gr.iter().sum();
                    for j in 0..c {
                        out[j] += gr[j] - yr[j].exp() * gs;
                    }
                }
            }
            Op::LayerNorm { x, xhat, rstd } => {
                let c = y.last_dim();
                let ga = self.acc(grads, *x);
                for r in 0..rstd.len() {
                    let gr = &gd[r * c..(r + 1) * c];
                    let xr = &xhat[r * c..(r + 1) * c];
                    let mg = gr.iter().sum::<f64>() / c as f64;
                    let mgx = gr.iter().zip(xr).map(|(g, x)| g * x).sum::<f64>() / c as f64;
                    for j in 0..c {
                        ga[r * c + j] += rstd[r] * (gr[j] - mg - xr[j] * mgx);
                    }
                }
            }
            &Op::Sigmoid(a) => {
                let ga = self.acc(grads, a);
                for ((o, &g), &s) in ga.iter_mut().zip(gd).zip(y.data()) {
                    *o += g * s * (1.0 - s);
                }
            }
            &Op::Gelu(a) => {
                let xd = self.value(a).data();
                let ga = self.acc(grads, a);
                for ((o, &g), &x) in ga.iter_mut().zip(gd).zip(xd) {
                    *o += g * gelu_grad(x);
                }
            }
            &Op::Exp(a) => {
                let ga = self.acc(grads, a);
                for ((o, &g), &e) in ga.iter_mut().zip(gd).zip(y.data()) {
                    *o += g * e;
                }
            }
            &Op::Sqrt(a) => {
                let ga = self.acc(grads, a);
                for ((o, &g), &s) in ga.iter_mut().zip(gd).zip(y.data()) {
                    *o += g / (2.0 * s);
                }
            }
            Op::Concat(parts) => {
                let rows = y.shape()[0];
                let total = y.last_dim();
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).last_dim();
                    if self.ng(p) {
                        let gp = self.acc(grads, p);
                        for r in 0..rows {
                            for j in 0..w {
                                gp[r * w + j] += gd[r * total + off + j];
                            }
                        }
                    }
                    off += w;
                }
            }
            &Op::NarrowCols(a, start) => {
                let cols = self.value(a).last_dim();
                let len = y.last_dim();
                let ga = self.acc(grads, a);
                for r in 0..y.rows() {
                    for j in 0..len {
                        ga[r * cols + start + j] += gd[r * len + j];
                    }
                }
            }
            Op::GatherRows(a, idx) => {
                let cols = y.last_dim();
                let ga = self.acc(grads, *a);
                for (r, &src) in idx.iter().enumerate() {
                    for j in 0..cols {
                        ga[src * cols + j] += gd[r * cols + j];
                    }
                }
            }
            &Op::Sum(a) => {
                let s = gd[0];
                self.acc(grads, a).iter_mut().for_each(|o| *o += s);
            }
            &Op::Mean(a) => {
                let n = self.value(a).len().max(1) as f64;
                let s = gd[0] / n;
                self.acc(grads, a).iter_mut().for_each(|o| *o += s);
            }
            &Op::SumLastDim(a) => {
                let cols = self.value(a).last_dim();
                let ga = self.acc(grads, a);
                for (i, o) in ga.iter_mut().enumerate() {
                    *o += gd[i / cols];
                }
            }
        }
    }
}
