//! Forward and backward passes for every layer of the forecaster stack.
//!
//! Layers are free functions over plain parameter structs. Every parameter
//! struct doubles as its own gradient container, so a backward pass returns a
//! value of the same type as the parameters it differentiates.

mod conv;
mod dense;
mod dropout;
mod lstm;
mod reshape;

pub use conv::{conv1d_backward, conv1d_forward, Conv1DParams};
pub use dense::{dense_backward, dense_forward, Activation, DenseParams};
pub use dropout::{dropout, dropout_backward, DropoutMask, Mode};
pub use lstm::{
    bilstm_backward, bilstm_forward, bilstm_forward_cached, lstm_backward, lstm_backward_repeated,
    lstm_forward, lstm_forward_cached, lstm_forward_repeated, BiLstmCache, BiLstmParams,
    LstmCache, LstmParams,
};
pub(crate) use lstm::{
    bilstm_backward_with, lstm_backward_repeated_with, lstm_backward_with, LstmFault,
};
pub use reshape::{flatten, repeat_backward, repeat_vector, unflatten};

use crate::tensor::Tensor;

/// Parameter gradients of one layer plus the gradient with respect to its input.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients<P> {
    pub params: P,
    pub input: Tensor,
}

/// A set of named trainable tensors with a fixed iteration order.
pub trait Parameterized {
    /// Names of the tensors, in the same order as [`Parameterized::tensors`].
    fn names(&self) -> Vec<&'static str>;
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Zero-valued copy, used as a gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        out
    }
}

pub(crate) fn init_limit(fan_in: usize) -> f64 {
    (1.0 / fan_in as f64).sqrt()
}

/// `acc += v * x` over equal-length slices.
#[inline]
pub(crate) fn axpy(acc: &mut [f64], v: f64, x: &[f64]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a += v * b;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |s, (&x, &y)| s + x * y)
}

#[cfg(test)]
pub(crate) mod testutil {
    /// Max element-wise relative error with a small absolute floor on the denominator.
    pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    /// Central differences of `f` with respect to every element of `x`.
    pub fn numeric_grad(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|i| {
                let orig = probe[i];
                probe[i] = orig + h;
                let up = f(&probe);
                probe[i] = orig - h;
                let down = f(&probe);
                probe[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }
}
