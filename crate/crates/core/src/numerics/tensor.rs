use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

/// Dense row-major tensor of `f64`.
///
/// Most of the crate works with rank-2 tensors (matrices); vectors are kept
/// as `1×n` or `n×1` matrices so that every kernel has a single layout.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor").field("shape", &self.shape).field("data", &self.data).finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::invalid(format!("shape {shape:?} has a zero extent")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { shape: vec![rows, cols], data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor { shape: vec![rows, cols], data: vec![value; rows * cols] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1, 1], data: vec![value] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::invalid("ragged rows"));
        }
        Tensor::new(vec![r, c], rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Uniform samples in `[-bound, bound]`.
    pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        Tensor { shape: vec![rows, cols], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Trailing extent; 1 for rank-1 tensors.
    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1..].iter().product()
        } else {
            1
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows()).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor { shape: vec![c, r], data: out }
    }

    /// `C = A·B` for `A: m×k`, `B: k×n`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::invalid(format!(
                "matmul dimension mismatch: {m}x{k} by {k2}x{n}"
            )));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let c_row = &mut out[i * n..(i + 1) * n];
            for (t, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[t * n..(t + 1) * n];
                for (c, &b) in c_row.iter_mut().zip(b_row) {
                    *c += a * b;
                }
            }
        }
        Ok(Tensor { shape: vec![m, n], data: out })
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Elementwise activation functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
}

/// Slope of the leaky ReLU inside graph attention scoring.
pub const LEAKY_SLOPE: f64 = 0.01;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 || x.is_nan() {
                    x
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    x
                } else {
                    s * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    pub(crate) fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(s) => {
                if x > 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

pub fn activate(t: &Tensor, kind: Activation) -> Tensor {
    t.map(|x| kind.apply(x))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log Σ exp(x)`. Returns `-inf` for an empty slice and
/// NaN if any input is NaN.
pub fn logsumexp(xs: &[f64]) -> f64 {
    if xs.iter().any(|x| x.is_nan()) {
        return f64::NAN;
    }
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Masked softmax. `mask[i] == true` means position `i` takes part.
///
/// Masked positions come out as exactly zero.
pub fn softmax(scores: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>> {
    if let Some(m) = mask {
        if m.len() != scores.len() {
            return Err(Error::invalid("softmax mask length differs from scores"));
        }
    }
    let on = |i: usize| mask.is_none_or(|m| m[i]);
    if !(0..scores.len()).any(on) {
        return Err(Error::DegenerateNeighborhood);
    }
    let mut max = f64::NEG_INFINITY;
    for (i, &s) in scores.iter().enumerate() {
        if on(i) && (s > max || s.is_nan()) {
            max = s;
            if s.is_nan() {
                break;
            }
        }
    }
    let mut out: Vec<f64> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| if on(i) { (s - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Draws an inverted-dropout mask: each entry is 0 with probability `rate`,
/// otherwise `1 / (1 - rate)`.
pub fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut impl Rng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config("dropout", format!("rate {rate} outside [0, 1)")));
    }
    let keep = 1.0 / (1.0 - rate);
    let data = (0..rows * cols)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Ok(Tensor { shape: vec![rows, cols], data })
}

/// Inverted dropout. Evaluation mode, or rate 0, returns the input unchanged.
pub fn dropout(t: &Tensor, rate: f64, mode: Mode, rng: &mut impl Rng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config("dropout", format!("rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok(t.clone());
    }
    let mask = dropout_mask(t.rows(), t.cols(), rate, rng)?;
    let data = t.data.iter().zip(&mask.data).map(|(a, m)| a * m).collect();
    Ok(Tensor { shape: t.shape.clone(), data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Error-free transformation `a + b = s + e`.
    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    /// Double-double accumulation of Σ a_t·b_t.
    fn dot_dd(a: &[f64], b: &[f64]) -> f64 {
        let (mut hi, mut lo) = (0.0f64, 0.0f64);
        for (&x, &y) in a.iter().zip(b) {
            let p = x * y;
            let pe = x.mul_add(y, -p);
            let (s, e) = two_sum(hi, p);
            hi = s;
            lo += e + pe;
        }
        hi + lo
    }

    #[test]
    fn matmul_identity_and_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Tensor::uniform(3, 3, 1.0, &mut rng);
        assert_eq!(Tensor::identity(3).matmul(&m).unwrap(), m);
        let c = Tensor::scalar(2.0).matmul(&Tensor::scalar(3.0)).unwrap();
        assert_eq!(c.data(), &[6.0]);
    }

    #[test]
    fn matmul_matches_extended_precision_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = Tensor::uniform(4, 5, 2.0, &mut rng);
        let b = Tensor::uniform(5, 3, 2.0, &mut rng);
        let c = a.matmul(&b).unwrap();
        let bt = b.transpose();
        for i in 0..4 {
            for j in 0..3 {
                let want = dot_dd(a.row(i), bt.row(j));
                assert!((c.get(i, j) - want).abs() < 1e-14, "{i},{j}");
            }
        }
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Tensor::zeros(2, 3);
        assert!(matches!(a.matmul(&Tensor::zeros(2, 3)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn tensor_rejects_bad_shape() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn softmax_cases() {
        let p = softmax(&[0.3; 4], None).unwrap();
        for v in p {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let p = softmax(&[5.0, -2.0, 9.0], Some(&[false, true, false])).unwrap();
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
        assert!(matches!(
            softmax(&[1.0, 2.0], Some(&[false, false])),
            Err(Error::DegenerateNeighborhood)
        ));
        assert!(softmax(&[f64::NAN, 1.0], None).unwrap().iter().all(|v| v.is_nan()));
        assert!(logsumexp(&[f64::NAN]).is_nan());
    }

    #[test]
    fn softmax_matches_direct_evaluation() {
        let p = softmax(&[1.0, 2.0, 3.0], None).unwrap();
        // direct exp / Σexp with a compensated denominator
        let e: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).collect();
        let ones = [1.0; 3];
        let z = dot_dd(&e, &ones);
        for (pi, ei) in p.iter().zip(&e) {
            assert!((pi - ei / z).abs() < 1e-15);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn activation_values() {
        assert_eq!(Activation::Relu.apply(-1.5), 0.0);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        assert_eq!(Activation::LeakyRelu(0.01).apply(-2.0), -0.02);
        // tanh = sinh/cosh through their Maclaurin series
        let x: f64 = 0.3;
        let (mut sinh, mut cosh) = (0.0, 0.0);
        let mut term = 1.0;
        for n in 0..30 {
            if n > 0 {
                term *= x / n as f64;
            }
            if n % 2 == 0 {
                cosh += term;
            } else {
                sinh += term;
            }
        }
        assert!((Activation::Tanh.apply(x) - sinh / cosh).abs() < 1e-12);
    }

    #[test]
    fn dropout_identities_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = Tensor::filled(2, 3, 1.7);
        assert_eq!(dropout(&t, 0.0, Mode::Train, &mut rng).unwrap(), t);
        assert_eq!(dropout(&t, 0.5, Mode::Eval, &mut rng).unwrap(), t);
        assert!(dropout(&t, 1.0, Mode::Eval, &mut rng).is_err());

        let big = Tensor::filled(1000, 100, 2.0);
        let d = dropout(&big, 0.3, Mode::Train, &mut rng).unwrap();
        let mean = d.data().iter().sum::<f64>() / d.len() as f64;
        assert!((mean - 2.0).abs() / 2.0 < 0.02, "mean {mean}");
        let zeros = d.data().iter().filter(|&&v| v == 0.0).count() as f64 / d.len() as f64;
        assert!((zeros - 0.3).abs() < 0.01);
    }

    #[test]
    fn dropout_is_seed_deterministic() {
        let t = Tensor::filled(10, 10, 1.0);
        let a = dropout(&t, 0.3, Mode::Train, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = dropout(&t, 0.3, Mode::Train, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}
