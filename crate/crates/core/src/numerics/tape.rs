//! Reverse-mode differentiation over dense tensors.
//!
//! A [`Tape`] records every primitive as it is evaluated. Calling
//! [`Tape::backward`] walks the record once in reverse, pushing adjoints
//! from the scalar loss down to the leaves. Parameter leaves carry a
//! [`ParamId`] so their adjoints end up in a [`Gradients`] table.

use crate::crf;
use crate::error::{Error, Result};
use crate::numerics::{softmax, Activation, Gradients, ParamId, ParamStore, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    /// Position on the tape; indexes the result of [`Tape::backward_nodes`].
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    OuterAdd(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor),
    Scale(Var, f64),
    Act(Var, Activation),
    SoftmaxRows(Var),
    LayerNorm { x: Var, xhat: Tensor, inv_std: Vec<f64> },
    HCat(Vec<Var>),
    VCat(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Gather(Var, Vec<Option<usize>>),
    Sum(Var),
    NegLog { x: Var, floor: f64 },
    Crf { emissions: Var, transitions: Var, d_emissions: Tensor, d_transitions: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records operations so their gradients can be replayed backward.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    clamped: usize,
}

fn shape_err(op: &str, a: &Tensor, b: &Tensor) -> Error {
    Error::invalid(format!("{op}: incompatible shapes {:?} and {:?}", a.shape(), b.shape()))
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

    /// How many times a log argument was clamped at its floor.
    pub fn clamp_count(&self) -> usize {
        self.clamped
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives no gradient entry of its own.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if !x.same_shape(y) {
            return Err(shape_err("add", x, y));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let v = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    /// `m×n + 1×n`, the bias row added to every row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(row));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(shape_err("add_row", x, b));
        }
        let n = x.cols();
        let data = x.data().iter().enumerate().map(|(i, p)| p + b.data()[i % n]).collect();
        let v = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(v, Op::AddRow(a, row)))
    }

    /// `m×n ⊙ 1×n`, every row scaled columnwise.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, g) = (self.value(a), self.value(row));
        if g.rows() != 1 || g.cols() != x.cols() {
            return Err(shape_err("mul_row", x, g));
        }
        let n = x.cols();
        let data = x.data().iter().enumerate().map(|(i, p)| p * g.data()[i % n]).collect();
        let v = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(v, Op::MulRow(a, row)))
    }

    /// `out[i][j] = col[i] + row[j]` for `col: m×1`, `row: 1×n`.
    pub fn outer_add(&mut self, col: Var, row: Var) -> Result<Var> {
        let (c, r) = (self.value(col), self.value(row));
        if c.cols() != 1 || r.rows() != 1 {
            return Err(shape_err("outer_add", c, r));
        }
        let (m, n) = (c.rows(), r.cols());
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                data.push(c.data()[i] + r.data()[j]);
            }
        }
        let v = Tensor::new(vec![m, n], data)?;
        Ok(self.push(v, Op::OuterAdd(col, row)))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if !x.same_shape(y) {
            return Err(shape_err("mul", x, y));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let v = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Hadamard product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        let x = self.value(a);
        if !x.same_shape(&c) {
            return Err(shape_err("mul_const", x, &c));
        }
        let data = x.data().iter().zip(c.data()).map(|(p, q)| p * q).collect();
        let v = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(v, Op::MulConst(a, c)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn activate(&mut self, a: Var, kind: Activation) -> Var {
        let v = self.value(a).map(|x| kind.apply(x));
        self.push(v, Op::Act(a, kind))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activate(a, Activation::Relu)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activate(a, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activate(a, Activation::Tanh)
    }

    /// Row-wise softmax. `mask`, when given, is row-major over the same shape;
    /// masked entries are exactly zero in the output.
    pub fn softmax_rows(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let x = self.value(a);
        let n = x.cols();
        if let Some(m) = mask {
            if m.len() != x.len() {
                return Err(Error::invalid("softmax mask does not cover the input"));
            }
        }
        let mut data = Vec::with_capacity(x.len());
        for r in 0..x.rows() {
            let row_mask = mask.map(|m| &m[r * n..(r + 1) * n]);
            data.extend(softmax(x.row(r), row_mask)?);
        }
        let v = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(v, Op::SoftmaxRows(a)))
    }

    /// Normalizes each row to zero mean and unit variance.
    pub fn layer_norm_rows(&mut self, a: Var, eps: f64) -> Var {
        let x = self.value(a);
        let n = x.cols();
        let mut xhat = Vec::with_capacity(x.len());
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            xhat.extend(row.iter().map(|v| (v - mean) * is));
        }
        let xhat = Tensor::new(x.shape().to_vec(), xhat).expect("same shape");
        self.push(xhat.clone(), Op::LayerNorm { x: a, xhat, inv_std })
    }

    /// Concatenates along columns; all parts need the same row count.
    pub fn hcat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::invalid("hcat of nothing"))?;
        let rows = self.value(*first).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::invalid("hcat: row counts differ"));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let v = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(v, Op::HCat(parts.to_vec())))
    }

    /// Stacks along rows; all parts need the same column count.
    pub fn vcat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::invalid("vcat of nothing"))?;
        let cols = self.value(*first).cols();
        if parts.iter().any(|&p| self.value(p).cols() != cols) {
            return Err(Error::invalid("vcat: column counts differ"));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rows = data.len() / cols;
        let v = Tensor::new(vec![rows, cols], data)?;
        Ok(self.push(v, Op::VCat(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if len == 0 || start + len > x.cols() {
            return Err(Error::invalid(format!("slice_cols {start}+{len} of {}", x.cols())));
        }
        let mut data = Vec::with_capacity(x.rows() * len);
        for r in 0..x.rows() {
            data.extend_from_slice(&x.row(r)[start..start + len]);
        }
        let v = Tensor::new(vec![x.rows(), len], data)?;
        Ok(self.push(v, Op::SliceCols(a, start)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if len == 0 || start + len > x.rows() {
            return Err(Error::invalid(format!("slice_rows {start}+{len} of {}", x.rows())));
        }
        let c = x.cols();
        let v = Tensor::new(vec![len, c], x.data()[start * c..(start + len) * c].to_vec())?;
        Ok(self.push(v, Op::SliceRows(a, start)))
    }

    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        self.slice_rows(a, r, 1)
    }

    /// Flat gather: `out.data[p] = a.data[index[p]]`, or 0 for `None`.
    pub fn gather(&mut self, a: Var, index: Vec<Option<usize>>, shape: [usize; 2]) -> Result<Var> {
        let x = self.value(a);
        if index.len() != shape[0] * shape[1] {
            return Err(Error::invalid("gather: index length does not match output shape"));
        }
        if let Some(bad) = index.iter().flatten().find(|&&i| i >= x.len()) {
            return Err(Error::invalid(format!("gather: index {bad} out of range {}", x.len())));
        }
        let data = index.iter().map(|i| i.map_or(0.0, |i| x.data()[i])).collect();
        let v = Tensor::new(shape.to_vec(), data)?;
        Ok(self.push(v, Op::Gather(a, index)))
    }

    /// Selects whole rows of a matrix (embedding lookup).
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let c = self.value(a).cols();
        let index = rows.iter().flat_map(|&r| (0..c).map(move |j| Some(r * c + j))).collect();
        self.gather(a, index, [rows.len(), c])
    }

    /// Which side of every non-differentiable point the recorded values sit
    /// on: one flag per ReLU or leaky ReLU input entry and per floored log
    /// argument, in recording order. Two tapes of the same computation with
    /// equal patterns lie in the same smooth piece of the function.
    pub fn branch_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Act(x, Activation::Relu | Activation::LeakyRelu(_)) => {
                    out.extend(self.value(*x).data().iter().map(|&v| v > 0.0));
                }
                Op::NegLog { x, floor } => {
                    out.extend(self.value(*x).data().iter().map(|&v| v < *floor));
                }
                _ => {}
            }
        }
        out
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Elementwise `-ln(max(x, floor))`; clamped entries are counted.
    pub fn neg_log(&mut self, a: Var, floor: f64) -> Var {
        let x = self.value(a);
        let clamped = x.data().iter().filter(|&&v| v < floor).count();
        let v = x.map(|p| -(p.max(floor)).ln());
        self.clamped += clamped;
        self.push(v, Op::NegLog { x: a, floor })
    }

    /// Linear-chain CRF negative log-likelihood of `gold`.
    ///
    /// The local gradients (marginals minus gold counts) come from a
    /// forward-backward pass run at record time.
    pub fn crf_nll(&mut self, emissions: Var, transitions: Var, gold: &[usize]) -> Result<Var> {
        let p = self.value(emissions);
        let a = self.value(transitions);
        let fb = crf::forward_backward(p, a)?;
        let score = crf::sequence_score(p, gold, a)?;
        let nll = fb.log_partition - score;
        let k = p.cols();
        let mut d_emissions = fb.unary;
        for (t, &y) in gold.iter().enumerate() {
            let cur = d_emissions.get(t, y);
            d_emissions.set(t, y, cur - 1.0);
        }
        let mut d_transitions = fb.pairwise;
        let (start, end) = (k, k + 1);
        let mut prev = start;
        for &y in gold.iter().chain(std::iter::once(&end)) {
            let cur = d_transitions.get(prev, y);
            d_transitions.set(prev, y, cur - 1.0);
            prev = y;
        }
        let v = Tensor::scalar(nll);
        Ok(self.push(v, Op::Crf { emissions, transitions, d_emissions, d_transitions }))
    }

    /// Adjoints of every node with respect to the scalar `loss`.
    pub fn backward_nodes(&self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::new(lv.shape().to_vec(), vec![1.0])?);

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(cur) => cur.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let out = &node.value;
            match &node.op {
                Op::Leaf | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&self.value(*b).transpose())?;
                    let gb = self.value(*a).transpose().matmul(&g)?;
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::AddRow(a, row) => {
                    let n = g.cols();
                    let mut gr = vec![0.0; n];
                    for (i, v) in g.data().iter().enumerate() {
                        gr[i % n] += v;
                    }
                    acc(&mut grads, *row, Tensor::new(vec![1, n], gr)?);
                    acc(&mut grads, *a, g.clone());
                }
                Op::MulRow(a, row) => {
                    let x = self.value(*a);
                    let w = self.value(*row);
                    let n = g.cols();
                    let mut gw = vec![0.0; n];
                    let mut gx = Vec::with_capacity(g.len());
                    for (i, v) in g.data().iter().enumerate() {
                        gw[i % n] += v * x.data()[i];
                        gx.push(v * w.data()[i % n]);
                    }
                    acc(&mut grads, *row, Tensor::new(vec![1, n], gw)?);
                    acc(&mut grads, *a, Tensor::new(x.shape().to_vec(), gx)?);
                }
                Op::OuterAdd(col, row) => {
                    let (m, n) = (g.rows(), g.cols());
                    let mut gc = vec![0.0; m];
                    let mut gr = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            let v = g.get(i, j);
                            gc[i] += v;
                            gr[j] += v;
                        }
                    }
                    acc(&mut grads, *col, Tensor::new(vec![m, 1], gc)?);
                    acc(&mut grads, *row, Tensor::new(vec![1, n], gr)?);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let ga = g.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
                    let gb = g.data().iter().zip(x.data()).map(|(p, q)| p * q).collect();
                    acc(&mut grads, *a, Tensor::new(g.shape().to_vec(), ga)?);
                    acc(&mut grads, *b, Tensor::new(g.shape().to_vec(), gb)?);
                }
                Op::MulConst(a, c) => {
                    let ga = g.data().iter().zip(c.data()).map(|(p, q)| p * q).collect();
                    acc(&mut grads, *a, Tensor::new(g.shape().to_vec(), ga)?);
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g.map(|v| v * s)),
                Op::Act(a, kind) => {
                    let x = self.value(*a);
                    let ga = g
                        .data()
                        .iter()
                        .zip(x.data().iter().zip(out.data()))
                        .map(|(gv, (&xv, &yv))| gv * kind.derivative(xv, yv))
                        .collect();
                    acc(&mut grads, *a, Tensor::new(g.shape().to_vec(), ga)?);
                }
                Op::SoftmaxRows(a) => {
                    let n = g.cols();
                    let mut ga = Vec::with_capacity(g.len());
                    for r in 0..g.rows() {
                        let y = out.row(r);
                        let gy = &g.data()[r * n..(r + 1) * n];
                        let dot: f64 = y.iter().zip(gy).map(|(p, q)| p * q).sum();
                        ga.extend(y.iter().zip(gy).map(|(yv, gv)| yv * (gv - dot)));
                    }
                    acc(&mut grads, *a, Tensor::new(g.shape().to_vec(), ga)?);
                }
                Op::LayerNorm { x, xhat, inv_std } => {
                    let n = g.cols();
                    let mut ga = Vec::with_capacity(g.len());
                    for r in 0..g.rows() {
                        let gy = &g.data()[r * n..(r + 1) * n];
                        let xh = xhat.row(r);
                        let mean_g = gy.iter().sum::<f64>() / n as f64;
                        let mean_gx = gy.iter().zip(xh).map(|(p, q)| p * q).sum::<f64>() / n as f64;
                        ga.extend(
                            gy.iter().zip(xh).map(|(gv, xv)| inv_std[r] * (gv - mean_g - xv * mean_gx)),
                        );
                    }
                    acc(&mut grads, *x, Tensor::new(g.shape().to_vec(), ga)?);
                }
                Op::HCat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let c = self.value(p).cols();
                        let mut gp = Vec::with_capacity(g.rows() * c);
                        for r in 0..g.rows() {
                            gp.extend_from_slice(&g.row(r)[offset..offset + c]);
                        }
                        acc(&mut grads, p, Tensor::new(vec![g.rows(), c], gp)?);
                        offset += c;
                    }
                }
                Op::VCat(parts) => {
                    let c = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.value(p).rows();
                        let gp = g.data()[offset * c..(offset + rows) * c].to_vec();
                        acc(&mut grads, p, Tensor::new(vec![rows, c], gp)?);
                        offset += rows;
                    }
                }
                Op::SliceCols(a, start) => {
                    let x = self.value(*a);
                    let mut ga = Tensor::zeros(x.rows(), x.cols());
                    for r in 0..g.rows() {
                        for (j, v) in g.row(r).iter().enumerate() {
                            ga.set(r, start + j, *v);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SliceRows(a, start) => {
                    let x = self.value(*a);
                    let mut ga = Tensor::zeros(x.rows(), x.cols());
                    let c = x.cols();
                    ga.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                    acc(&mut grads, *a, ga);
                }
                Op::Gather(a, index) => {
                    let x = self.value(*a);
                    let mut ga = Tensor::new(x.shape().to_vec(), vec![0.0; x.len()])?;
                    for (p, i) in index.iter().enumerate() {
                        if let Some(i) = i {
                            ga.data_mut()[*i] += g.data()[p];
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let x = self.value(*a);
                    let s = g.data()[0];
                    acc(&mut grads, *a, Tensor::new(x.shape().to_vec(), vec![s; x.len()])?);
                }
                Op::NegLog { x, floor } => {
                    let xv = self.value(*x);
                    let ga = g.data().iter().zip(xv.data()).map(|(gv, p)| -gv / p.max(*floor)).collect();
                    acc(&mut grads, *x, Tensor::new(g.shape().to_vec(), ga)?);
                }
                Op::Crf { emissions, transitions, d_emissions, d_transitions } => {
                    let s = g.data()[0];
                    acc(&mut grads, *emissions, d_emissions.map(|v| v * s));
                    acc(&mut grads, *transitions, d_transitions.map(|v| v * s));
                }
            }
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    /// Gradients of the scalar `loss` with respect to every parameter leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let nodes = self.backward_nodes(loss)?;
        let mut out = Gradients::with_capacity(0);
        for (idx, g) in nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&self.nodes[idx].op, g) {
                out.accumulate(*id, g);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central differences of `f` at every entry of `x`.
    fn numeric_grad(x: &Tensor, f: impl Fn(&Tensor) -> f64) -> Tensor {
        let eps = 1e-4;
        let mut g = x.clone();
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += eps;
            let mut minus = x.clone();
            minus.data_mut()[i] -= eps;
            g.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * eps);
        }
        g
    }

    fn assert_close(analytic: &Tensor, numeric: &Tensor) {
        for (a, n) in analytic.data().iter().zip(numeric.data()) {
            let err = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            assert!(err < 1e-3, "analytic {a} numeric {n}");
        }
    }

    /// Runs `build` on a tape with a single input leaf and checks its gradient.
    fn check_unary(x: Tensor, build: impl Fn(&mut Tape, Var) -> Var) {
        let eval = |t: &Tensor| {
            let mut tape = Tape::new();
            let v = tape.constant(t.clone());
            let out = build(&mut tape, v);
            tape.value(out).data()[0]
        };
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let out = build(&mut tape, v);
        let grads = tape.backward_nodes(out).unwrap();
        let analytic = grads[0].clone().unwrap();
        assert_close(&analytic, &numeric_grad(&x, eval));
    }

    fn rand_t(r: usize, c: usize, seed: u64) -> Tensor {
        Tensor::uniform(r, c, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn square_and_sigmoid_scalars() {
        let mut store = ParamStore::new();
        let x = store.insert("x", Tensor::scalar(3.0)).unwrap();
        let mut tape = Tape::new();
        let xv = tape.param(&store, x);
        let sq = tape.mul(xv, xv).unwrap();
        let g = tape.backward(sq).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[6.0]);

        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::scalar(0.0)).unwrap();
        let mut tape = Tape::new();
        let wv = tape.param(&store, w);
        let xc = tape.constant(Tensor::scalar(1.0));
        let z = tape.matmul(wv, xc).unwrap();
        let s = tape.sigmoid(z);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[0.25]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::zeros(2, 2));
        assert!(matches!(tape.backward(v), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn each_primitive_matches_finite_differences() {
        let w = rand_t(3, 4, 11);
        let wv = w.clone();
        check_unary(rand_t(2, 3, 1), move |t, x| {
            let c = t.constant(wv.clone());
            let m = t.matmul(x, c).unwrap();
            let s = t.tanh(m);
            t.sum(s)
        });
        check_unary(rand_t(3, 2, 2), |t, x| {
            let tr = t.transpose(x);
            let sg = t.sigmoid(tr);
            let sq = t.mul(sg, sg).unwrap();
            t.sum(sq)
        });
        check_unary(rand_t(3, 4, 3), |t, x| {
            let mask: Vec<bool> = (0..12).map(|i| i % 3 != 1).collect();
            let s = t.softmax_rows(x, Some(&mask)).unwrap();
            let w = t.constant(rand_t(3, 4, 33));
            let p = t.mul(s, w).unwrap();
            t.sum(p)
        });
        check_unary(rand_t(3, 5, 4), |t, x| {
            let n = t.layer_norm_rows(x, 1e-5);
            let w = t.constant(rand_t(3, 5, 44));
            let p = t.mul(n, w).unwrap();
            t.sum(p)
        });
        check_unary(rand_t(4, 1, 5), |t, x| {
            let row = t.constant(rand_t(1, 3, 55));
            let o = t.outer_add(x, row).unwrap();
            let l = t.activate(o, Activation::LeakyRelu(0.01));
            let sq = t.mul(l, l).unwrap();
            t.sum(sq)
        });
        check_unary(rand_t(2, 3, 6), |t, x| {
            let b = t.constant(rand_t(1, 3, 66));
            let a = t.add_row(x, b).unwrap();
            let h = t.hcat(&[a, x]).unwrap();
            let v = t.vcat(&[h, h]).unwrap();
            let s = t.slice_cols(v, 1, 3).unwrap();
            let r = t.slice_rows(s, 1, 2).unwrap();
            let sq = t.mul(r, r).unwrap();
            t.sum(sq)
        });
        check_unary(rand_t(1, 3, 7), |t, g| {
            let x = t.constant(rand_t(4, 3, 77));
            let m = t.mul_row(x, g).unwrap();
            let sq = t.mul(m, m).unwrap();
            t.sum(sq)
        });
        check_unary(rand_t(3, 3, 8).map(|v| v.abs() + 0.1), |t, x| {
            let g = t.gather(x, vec![Some(0), None, Some(4), Some(4)], [2, 2]).unwrap();
            let l = t.neg_log(g, 1e-12);
            let s = t.scale(l, 1.5);
            t.sum(s)
        });
        check_unary(rand_t(2, 3, 9), |t, x| {
            let mask = Tensor::new(vec![2, 3], vec![0.0, 2.0, 2.0, 2.0, 0.0, 2.0]).unwrap();
            let d = t.mul_const(x, mask).unwrap();
            let r = t.relu(d);
            let e = t.add(r, x).unwrap();
            let sq = t.mul(e, e).unwrap();
            t.sum(sq)
        });
    }

    #[test]
    fn param_reused_twice_accumulates() {
        let mut store = ParamStore::new();
        let id = store.insert("w", Tensor::scalar(2.0)).unwrap();
        let mut tape = Tape::new();
        let a = tape.param(&store, id);
        let b = tape.param(&store, id);
        let p = tape.mul(a, b).unwrap();
        let g = tape.backward(p).unwrap();
        assert_eq!(g.get(id).unwrap().data(), &[4.0]);
    }

    #[test]
    fn neg_log_clamp_is_counted() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, 2], vec![0.0, 0.5]).unwrap());
        let l = tape.neg_log(x, 1e-12);
        assert_eq!(tape.clamp_count(), 1);
        assert!((tape.value(l).data()[0] - 1e-12f64.ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn branch_pattern_tracks_relu_sides() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[vec![-1.0, 2.0, 0.0]]).unwrap());
        let r = tape.relu(x);
        tape.tanh(r);
        let p = tape.constant(Tensor::from_rows(&[vec![1e-20]]).unwrap());
        tape.neg_log(p, 1e-12);
        assert_eq!(tape.branch_pattern(), vec![false, true, false, true]);
    }
}
