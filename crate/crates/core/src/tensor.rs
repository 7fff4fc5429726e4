//! Dense row-major `f64` arrays and the seeded generator shared by every layer.
//!
//! Reductions always sum left to right over the contracted index so results
//! are bit-reproducible between runs.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting mismatched lengths, zero extents and non-finite values.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor element {i}")));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len().max(1)], data)
    }

    /// Row-major matrix from nested rows.
    pub fn matrix(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged matrix rows".into()));
        }
        Self::new(
            vec![rows.len(), cols],
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Internal constructor for layer code that already guarantees the length.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Product of all extents after the first.
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Dimension {
                op: "reshape",
                left: self.shape.clone(),
                right: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc + v)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn transpose(&self) -> Result<Self> {
        if self.shape.len() != 2 {
            return Err(Error::Shape(format!(
                "transpose needs a matrix, got {:?}",
                self.shape
            )));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Self::from_parts(vec![n, m], out))
    }

    /// Flags non-finite results in debug builds.
    fn checked(self, op: &str) -> Result<Self> {
        if cfg!(debug_assertions) && !self.all_finite() {
            return Err(Error::NonFinite(format!("result of {op}")));
        }
        Ok(self)
    }
}

/// Matrix product with a fixed left-to-right summation over the inner index.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::Dimension {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::from_parts(vec![m, n], out).checked("matmul")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EwiseOp {
    Add,
    Sub,
    Mul,
    Tanh,
    Sigmoid,
    Relu,
}

impl EwiseOp {
    pub fn is_binary(self) -> bool {
        matches!(self, EwiseOp::Add | EwiseOp::Sub | EwiseOp::Mul)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Elementwise operation. Binary ops need equal shapes, or a single-element right operand.
pub fn ewise(op: EwiseOp, a: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let data = match (op.is_binary(), b) {
        (false, None) => {
            let f: fn(f64) -> f64 = match op {
                EwiseOp::Tanh => f64::tanh,
                EwiseOp::Sigmoid => sigmoid,
                EwiseOp::Relu => relu,
                _ => unreachable!(),
            };
            a.data.iter().map(|&x| f(x)).collect()
        }
        (true, Some(b)) => {
            let f: fn(f64, f64) -> f64 = match op {
                EwiseOp::Add => |x, y| x + y,
                EwiseOp::Sub => |x, y| x - y,
                EwiseOp::Mul => |x, y| x * y,
                _ => unreachable!(),
            };
            if b.shape == a.shape {
                a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect()
            } else if b.data.len() == 1 {
                let y = b.data[0];
                a.data.iter().map(|&x| f(x, y)).collect()
            } else {
                return Err(Error::Dimension {
                    op: "ewise",
                    left: a.shape.clone(),
                    right: b.shape.clone(),
                });
            }
        }
        (true, None) => {
            return Err(Error::Parameter(format!("{op:?} needs a second operand")))
        }
        (false, Some(_)) => {
            return Err(Error::Parameter(format!("{op:?} is unary")))
        }
    };
    Tensor::from_parts(a.shape.clone(), data).checked("ewise")
}

/// Seeded generator (ChaCha8 stream). The same seed gives the same draws on every platform.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)` with 53 bits of mantissa.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.gen::<u64>() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// Derives an independent child generator; advances this one by one draw.
    pub fn fork(&mut self) -> Rng {
        Rng::new(self.inner.gen())
    }
}

/// I.i.d. draws in `[-limit, limit]`.
pub fn uniform_init(rng: &mut Rng, shape: &[usize], limit: f64) -> Result<Tensor> {
    if !limit.is_finite() || limit <= 0.0 {
        return Err(Error::Parameter(format!(
            "uniform_init limit must be positive, got {limit}"
        )));
    }
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| (2.0 * rng.uniform() - 1.0) * limit).collect();
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::{ewise, matmul, uniform_init, Error, EwiseOp, Rng, Tensor};
    use proptest::prelude::*;

    fn naive(a: &Tensor, b: &Tensor) -> Vec<f64> {
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.at(i, p) * b.at(p, j);
                }
                out[i * n + j] = s;
            }
        }
        out
    }

    #[test]
    fn matmul_identity_and_dot() {
        let a = Tensor::matrix(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&Tensor::identity(2), &a).unwrap(), a);
        let r = Tensor::matrix(&[&[1.0, 2.0]]).unwrap();
        let c = Tensor::matrix(&[&[3.0], &[4.0]]).unwrap();
        assert_eq!(matmul(&r, &c).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Rng::new(3);
        let a = uniform_init(&mut rng, &[5, 4], 1.0).unwrap();
        let b = uniform_init(&mut rng, &[4, 3], 1.0).unwrap();
        let got = matmul(&a, &b).unwrap();
        for (g, e) in got.data().iter().zip(naive(&a, &b)) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn ewise_activations() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(ewise(EwiseOp::Relu, &x, None).unwrap().data(), &[0.0, 0.0, 2.0]);
        let z = Tensor::vector(vec![0.0]).unwrap();
        assert_eq!(ewise(EwiseOp::Sigmoid, &z, None).unwrap().data(), &[0.5]);
        assert_eq!(ewise(EwiseOp::Tanh, &z, None).unwrap().data(), &[0.0]);
    }

    #[test]
    fn ewise_rejects_shape_mismatch_and_accepts_scalar() {
        let a = Tensor::zeros(&[3]);
        let b = Tensor::zeros(&[2]);
        assert!(matches!(
            ewise(EwiseOp::Add, &a, Some(&b)),
            Err(Error::Dimension { .. })
        ));
        let s = Tensor::vector(vec![2.0]).unwrap();
        let ones = Tensor::filled(&[3], 1.0);
        assert_eq!(ewise(EwiseOp::Mul, &ones, Some(&s)).unwrap().data(), &[2.0; 3]);
    }

    #[test]
    fn construction_rejects_nan_and_bad_length() {
        assert!(Tensor::new(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn uniform_init_contract() {
        assert!(uniform_init(&mut Rng::new(1), &[3], 0.0).is_err());
        let a = uniform_init(&mut Rng::new(7), &[4, 4], 0.5).unwrap();
        let b = uniform_init(&mut Rng::new(7), &[4, 4], 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_init_statistics() {
        let n = 100_000;
        let t = uniform_init(&mut Rng::new(11), &[n], 0.1).unwrap();
        assert!(t.data().iter().all(|v| (-0.1..=0.1).contains(v)));
        // Var of U(-a, a) is a^2/3.
        let sigma_mean = (0.01f64 / 3.0 / n as f64).sqrt();
        let mean = t.sum() / n as f64;
        assert!(mean.abs() < 3.0 * sigma_mean, "mean {mean}");
    }

    proptest! {
        #[test]
        fn matmul_right_identity_is_exact(m in 1usize..6, n in 1usize..6, seed in any::<u64>()) {
            let a = uniform_init(&mut Rng::new(seed), &[m, n], 3.0).unwrap();
            prop_assert_eq!(matmul(&a, &Tensor::identity(n)).unwrap(), a);
        }

        #[test]
        fn add_and_mul_commute(n in 1usize..20, seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let a = uniform_init(&mut rng, &[n], 5.0).unwrap();
            let b = uniform_init(&mut rng, &[n], 5.0).unwrap();
            for op in [EwiseOp::Add, EwiseOp::Mul] {
                prop_assert_eq!(ewise(op, &a, Some(&b)).unwrap(), ewise(op, &b, Some(&a)).unwrap());
            }
        }
    }
}
