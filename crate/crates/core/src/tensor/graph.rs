use std::collections::HashMap;

use super::{ParamGrads, ParamId, ParamStore, Rng, Tensor};
use crate::error::{Error, Result};

/// Probability clamp used by [`Graph::bce`].
pub const BCE_EPS: f64 = 1e-7;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    Mul(Var, Var),
    ScaleRows(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    Dropout { x: Var, mask: Vec<f64> },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    Sum(Var),
    Bce { yhat: Var, labels: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation so it can be differentiated in reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bound: HashMap<ParamId, Var>,
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

    fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, name: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Constant, false, "constant")
    }

    /// Bind a stored parameter as a leaf. Repeated binds of the same id return
    /// the same node, so a parameter reused across time steps accumulates one
    /// gradient.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        if let Some(&v) = self.bound.get(&id) {
            return Ok(v);
        }
        let v = self.push(store.get(id).clone(), Op::Param, true, store.name(id))?;
        self.bound.insert(id, v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), rg, "matmul")
    }

    /// `x · wᵀ + b` for `x: B × in`, `w: out × in`, `b: 1 × out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let [batch, d_in] = self.shape(x);
        let [d_out, w_in] = self.shape(w);
        if d_in != w_in {
            return Err(Error::shape(
                "linear",
                format!("input {:?} vs weight {:?}", self.shape(x), self.shape(w)),
            ));
        }
        if let Some(b) = b {
            if self.shape(b) != [1, d_out] {
                return Err(Error::shape(
                    "linear",
                    format!("bias {:?} for {d_out} outputs", self.shape(b)),
                ));
            }
        }
        let xv = self.value(x);
        let wv = self.value(w);
        let mut out = vec![0.0; batch * d_out];
        for r in 0..batch {
            let xr = xv.row(r);
            let out_row = &mut out[r * d_out..(r + 1) * d_out];
            for (o, slot) in out_row.iter_mut().enumerate() {
                *slot = dot(xr, wv.row(o));
            }
            if let Some(b) = b {
                for (slot, bias) in out_row.iter_mut().zip(self.value(b).data()) {
                    *slot += bias;
                }
            }
        }
        let rg = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(
            Tensor::new(batch, d_out, out)?,
            Op::Linear { x, w, b },
            rg,
            "linear",
        )
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let [r, c] = self.shape(a);
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(r, c, data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same("add", a, b, |x, y| x + y)?;
        let rg = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), rg, "add")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same("mul", a, b, |x, y| x * y)?;
        let rg = self.needs(a) || self.needs(b);
        self.push(value, Op::Mul(a, b), rg, "mul")
    }

    /// Row `r` of `a` (B × n) multiplied by the scalar `s[r]` (s is B × 1).
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Result<Var> {
        let [rows, cols] = self.shape(a);
        if self.shape(s) != [rows, 1] {
            return Err(Error::shape(
                "scale_rows",
                format!("{:?} scaled by {:?}", self.shape(a), self.shape(s)),
            ));
        }
        let av = self.value(a);
        let sv = self.value(s).data();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend(av.row(r).iter().map(|v| v * sv[r]));
        }
        let rg = self.needs(a) || self.needs(s);
        self.push(Tensor::new(rows, cols, data)?, Op::ScaleRows(a, s), rg, "scale_rows")
    }

    fn map(&mut self, x: Var, op: Op, name: &str, f: impl Fn(f64) -> f64) -> Result<Var> {
        let [r, c] = self.shape(x);
        let data = self.value(x).data().iter().map(|&v| f(v)).collect();
        let rg = self.needs(x);
        self.push(Tensor::new(r, c, data)?, op, rg, name)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map(x, Op::Relu(x), "relu", |v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map(x, Op::Sigmoid(x), "sigmoid", sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.map(x, Op::Tanh(x), "tanh", f64::tanh)
    }

    /// Softmax over each row.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let [r, c] = self.shape(x);
        let xv = self.value(x);
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            data.extend(softmax(xv.row(i)));
        }
        let rg = self.needs(x);
        self.push(Tensor::new(r, c, data)?, Op::SoftmaxRows(x), rg, "softmax")
    }

    /// Inverted dropout: during training each entry is zeroed with
    /// probability `p` and survivors are scaled by `1 / (1 - p)`; otherwise
    /// the input is returned unchanged.
    pub fn dropout(&mut self, x: Var, p: f64, training: bool, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "dropout probability must lie in [0, 1), got {p}"
            )));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - p);
        let [r, c] = self.shape(x);
        let mask: Vec<f64> = (0..r * c)
            .map(|_| if rng.unit() < p { 0.0 } else { scale })
            .collect();
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let rg = self.needs(x);
        self.push(Tensor::new(r, c, data)?, Op::Dropout { x, mask }, rg, "dropout")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::shape("concat_cols", "no inputs"))?;
        let rows = self.shape(first)[0];
        if parts.iter().any(|&p| self.shape(p)[0] != rows) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = parts.iter().any(|&p| self.needs(p));
        self.push(
            Tensor::new(rows, cols, data)?,
            Op::ConcatCols(parts.to_vec()),
            rg,
            "concat_cols",
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::shape("concat_rows", "no inputs"))?;
        let cols = self.shape(first)[1];
        if parts.iter().any(|&p| self.shape(p)[1] != cols) {
            return Err(Error::shape("concat_rows", "column counts differ"));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rows = data.len() / cols;
        let rg = parts.iter().any(|&p| self.needs(p));
        self.push(
            Tensor::new(rows, cols, data)?,
            Op::ConcatRows(parts.to_vec()),
            rg,
            "concat_rows",
        )
    }

    /// Columns `start..start + len` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let [rows, cols] = self.shape(x);
        if len == 0 || start + len > cols {
            return Err(Error::shape(
                "slice_cols",
                format!("{start}..{} of {cols} columns", start + len),
            ));
        }
        let xv = self.value(x);
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&xv.row(r)[start..start + len]);
        }
        let rg = self.needs(x);
        self.push(
            Tensor::new(rows, len, data)?,
            Op::SliceCols { x, start },
            rg,
            "slice_cols",
        )
    }

    /// Sum of all entries, as a `1 × 1` tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        let rg = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg, "sum")
    }

    /// Summed binary cross-entropy `-Σ [y ln ŷ + (1-y) ln(1-ŷ)]` with ŷ
    /// clamped into `[BCE_EPS, 1 - BCE_EPS]`.
    ///
    /// The backward pass uses `(ŷ - y) / (ŷ (1 - ŷ))` evaluated at the
    /// clamped value, so saturated but wrong predictions still get a signal.
    pub fn bce(&mut self, yhat: Var, labels: &[f64]) -> Result<Var> {
        let probs = self.value(yhat).data();
        if probs.len() != labels.len() {
            return Err(Error::shape(
                "bce",
                format!("{} predictions vs {} labels", probs.len(), labels.len()),
            ));
        }
        let loss = bce_sum(probs, labels);
        let rg = self.needs(yhat);
        self.push(
            Tensor::scalar(loss),
            Op::Bce {
                yhat,
                labels: labels.to_vec(),
            },
            rg,
            "bce",
        )
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.shape(output) != [1, 1] {
            return Err(Error::shape(
                "backward",
                format!("output must be scalar, got {:?}", self.shape(output)),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, t: Tensor| {
            if !self.needs(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Constant | Op::Param => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                if self.needs(*a) {
                    acc(*a, g.matmul(&bv.transpose()).expect("matmul grad shape"));
                }
                if self.needs(*b) {
                    acc(*b, av.transpose().matmul(g).expect("matmul grad shape"));
                }
            }
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let [batch, d_in] = xv.shape();
                let d_out = wv.rows();
                if self.needs(*x) {
                    let mut dx = vec![0.0; batch * d_in];
                    for r in 0..batch {
                        let dxr = &mut dx[r * d_in..(r + 1) * d_in];
                        for (o, &go) in g.row(r).iter().enumerate() {
                            if go != 0.0 {
                                axpy(dxr, go, wv.row(o));
                            }
                        }
                    }
                    acc(*x, Tensor::new(batch, d_in, dx).expect("dx shape"));
                }
                if self.needs(*w) {
                    let mut dw = vec![0.0; d_out * d_in];
                    for r in 0..batch {
                        let xr = xv.row(r);
                        for (o, &go) in g.row(r).iter().enumerate() {
                            if go != 0.0 {
                                axpy(&mut dw[o * d_in..(o + 1) * d_in], go, xr);
                            }
                        }
                    }
                    acc(*w, Tensor::new(d_out, d_in, dw).expect("dw shape"));
                }
                if let Some(b) = b {
                    if self.needs(*b) {
                        let mut db = vec![0.0; d_out];
                        for r in 0..batch {
                            axpy(&mut db, 1.0, g.row(r));
                        }
                        acc(*b, Tensor::new(1, d_out, db).expect("db shape"));
                    }
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                if self.needs(*a) {
                    acc(*a, elementwise(g, bv, |x, y| x * y));
                }
                if self.needs(*b) {
                    acc(*b, elementwise(g, av, |x, y| x * y));
                }
            }
            Op::ScaleRows(a, s) => {
                let av = self.value(*a);
                let sv = self.value(*s).data();
                let [rows, cols] = av.shape();
                if self.needs(*a) {
                    let mut da = Vec::with_capacity(rows * cols);
                    for r in 0..rows {
                        da.extend(g.row(r).iter().map(|x| x * sv[r]));
                    }
                    acc(*a, Tensor::new(rows, cols, da).expect("shape"));
                }
                if self.needs(*s) {
                    let ds = (0..rows).map(|r| dot(g.row(r), av.row(r))).collect();
                    acc(*s, Tensor::new(rows, 1, ds).expect("shape"));
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                acc(*x, elementwise(g, xv, |gi, xi| if xi > 0.0 { gi } else { 0.0 }));
            }
            Op::Sigmoid(x) => {
                acc(*x, elementwise(g, &node.value, |gi, y| gi * y * (1.0 - y)));
            }
            Op::Tanh(x) => {
                acc(*x, elementwise(g, &node.value, |gi, y| gi * (1.0 - y * y)));
            }
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                let [rows, cols] = y.shape();
                let mut dx = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let inner = dot(gr, yr);
                    dx.extend(yr.iter().zip(gr).map(|(yi, gi)| yi * (gi - inner)));
                }
                acc(*x, Tensor::new(rows, cols, dx).expect("shape"));
            }
            Op::Dropout { x, mask } => {
                let [r, c] = g.shape();
                let dx = g.data().iter().zip(mask).map(|(gi, m)| gi * m).collect();
                acc(*x, Tensor::new(r, c, dx).expect("shape"));
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if self.needs(p) {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        acc(p, Tensor::new(rows, w, d).expect("shape"));
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let h = self.shape(p)[0];
                    if self.needs(p) {
                        let d = g.data()[offset * cols..(offset + h) * cols].to_vec();
                        acc(p, Tensor::new(h, cols, d).expect("shape"));
                    }
                    offset += h;
                }
            }
            Op::SliceCols { x, start } => {
                let [rows, cols] = self.shape(*x);
                let len = g.cols();
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    d[r * cols + start..r * cols + start + len].copy_from_slice(g.row(r));
                }
                acc(*x, Tensor::new(rows, cols, d).expect("shape"));
            }
            Op::Sum(x) => {
                let [r, c] = self.shape(*x);
                acc(*x, Tensor::filled(r, c, g.item()));
            }
            Op::Bce { yhat, labels } => {
                let [r, c] = self.shape(*yhat);
                let gi = g.item();
                let d = self
                    .value(*yhat)
                    .data()
                    .iter()
                    .zip(labels)
                    .map(|(&p, &y)| {
                        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                        gi * (p - y) / (p * (1.0 - p))
                    })
                    .collect();
                acc(*yhat, Tensor::new(r, c, d).expect("shape"));
            }
        }
    }
}

/// Result of [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the output with respect to `v`, if it was reached.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Collect the gradients of every bound parameter.
    pub fn params(&self, graph: &Graph) -> ParamGrads {
        let mut out = ParamGrads::default();
        for (&id, &v) in &graph.bound {
            if let Some(g) = self.wrt(v) {
                out.accumulate(id, g);
            }
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let [r, c] = a.shape();
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(r, c, data).expect("elementwise shape")
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `exp(x_i - max x) / Σ_j exp(x_j - max x)`. Entries that underflow are
/// rounded up to the smallest positive subnormal, so every weight stays
/// strictly positive.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| (e / total).max(TINY)).collect()
}

const TINY: f64 = f64::from_bits(1);

/// Summed clamped binary cross-entropy over plain slices.
pub fn bce_sum(probs: &[f64], labels: &[f64]) -> f64 {
    -probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        })
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::new(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_reference_values() {
        let y = softmax(&[1.0, 2.0, 3.0]);
        // High-precision reference: e^k / (e + e^2 + e^3).
        let expected = [0.090_030_573_170_380_46, 0.244_728_471_054_797_6, 0.665_240_955_774_821_9];
        for (a, b) in y.iter().zip(expected) {
            assert!((a - b).abs() < 1e-7);
        }
        assert_eq!(softmax(&[0.0, 0.0, 0.0]), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn softmax_handles_large_logits() {
        let y = softmax(&[1e4, -1e4, 0.0]);
        assert!(y.iter().all(|&v| v > 0.0));
        assert_eq!(y[0], 1.0);
        assert!(y.iter().all(|v| v.is_finite()));
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bce_values() {
        let n = 7;
        let l = bce_sum(&vec![0.5; n], &vec![1.0; n]);
        assert!((l - n as f64 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_sum(&[0.8], &[1.0]) - 0.223_143_551_314_209_7).abs() < 1e-12);
        let perfect = bce_sum(&[1.0, 0.0], &[1.0, 0.0]);
        assert!(perfect <= 2.0 * -(1.0f64 - 1e-7).ln() + 1e-15);
    }

    #[test]
    fn bce_length_mismatch() {
        let mut g = Graph::new();
        let p = g.constant(t(1, 2, &[0.5, 0.5])).unwrap();
        assert!(g.bce(p, &[1.0]).is_err());
    }

    #[test]
    fn relu_backward_zero_on_negative_inputs() {
        let store = {
            let mut s = ParamStore::new();
            s.insert("x", t(1, 4, &[-2.0, -0.5, 0.5, 3.0])).unwrap();
            s
        };
        let mut g = Graph::new();
        let x = g.param(&store, store.id("x").unwrap()).unwrap();
        let y = g.relu(x).unwrap();
        let s = g.sum(y).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = Rng::new(3);
        let mut g = Graph::new();
        let x = g.constant(Tensor::filled(2, 3, 1.5)).unwrap();
        assert_eq!(g.dropout(x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(g.dropout(x, 0.9, false, &mut rng).unwrap(), x);
        assert!(g.dropout(x, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_mean() {
        let mut rng = Rng::new(2024);
        let mut g = Graph::new();
        let x = g.constant(Tensor::filled(1, 100_000, 1.0)).unwrap();
        let y = g.dropout(x, 0.5, true, &mut rng).unwrap();
        let mean = g.value(y).data().iter().sum::<f64>() / 100_000.0;
        assert!((0.98..=1.02).contains(&mean), "mean {mean}");
    }

    #[test]
    fn shape_errors() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(2, 3)).unwrap();
        let b = g.constant(Tensor::zeros(3, 2)).unwrap();
        assert!(g.add(a, b).is_err());
        assert!(g.linear(a, b, None).is_err());
        assert!(g.slice_cols(a, 2, 2).is_err());
        assert!(g.backward(a).is_err());
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut g = Graph::new();
        assert!(matches!(
            g.constant(t(1, 1, &[f64::NAN])),
            Err(Error::NonFinite(_))
        ));
    }
}
