use super::{axpy, dot, init_limit, LayerGradients, Parameterized};
use crate::error::{Error, Result};
use crate::tensor::{uniform_init, Rng, Tensor};

/// Valid-padding, stride-1 1-D convolution with a fused ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1DParams {
    /// `filters x kernel_size x in_channels`
    pub kernels: Tensor,
    /// `filters`
    pub bias: Tensor,
}

impl Conv1DParams {
    pub fn init(rng: &mut Rng, filters: usize, kernel: usize, in_channels: usize) -> Result<Self> {
        let limit = init_limit(kernel * in_channels);
        Ok(Self {
            kernels: uniform_init(rng, &[filters, kernel, in_channels], limit)?,
            bias: Tensor::zeros(&[filters]),
        })
    }

    pub fn filters(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[2]
    }

    /// `filters * (kernel_size * in_channels + 1)`
    pub fn count(filters: usize, kernel: usize, in_channels: usize) -> usize {
        filters * (kernel * in_channels + 1)
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        if x.shape().len() != 2 || x.cols() != self.in_channels() {
            return Err(Error::Dimension {
                op: "conv1d",
                left: x.shape().to_vec(),
                right: self.kernels.shape().to_vec(),
            });
        }
        let (t, k) = (x.rows(), self.kernel_size());
        if t < k {
            return Err(Error::Shape(format!(
                "conv1d input length {t} shorter than kernel {k}"
            )));
        }
        Ok(t - k + 1)
    }
}

impl Parameterized for Conv1DParams {
    fn names(&self) -> Vec<&'static str> {
        vec!["kernels", "bias"]
    }

    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.kernels, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.kernels, &mut self.bias]
    }
}

/// `out[t, f] = relu(bias[f] + sum_j sum_c kernel[f, j, c] * x[t + j, c])`.
///
/// Kernel `f` and the input slice starting at row `t` are both contiguous with
/// `(j, c)` layout, so each output is one dot product.
pub fn conv1d_forward(x: &Tensor, p: &Conv1DParams) -> Result<Tensor> {
    let out_len = p.check_input(x)?;
    let (filters, span) = (p.filters(), p.kernel_size() * p.in_channels());
    let c = p.in_channels();
    let mut out = vec![0.0; out_len * filters];
    for t in 0..out_len {
        let window = &x.data()[t * c..t * c + span];
        for f in 0..filters {
            let z = p.bias.data()[f] + dot(p.kernels.row(f), window);
            out[t * filters + f] = if z > 0.0 { z } else { 0.0 };
        }
    }
    Ok(Tensor::from_parts(vec![out_len, filters], out))
}

/// Gradients of [`conv1d_forward`]. `output` is the forward result and supplies the ReLU mask.
pub fn conv1d_backward(
    x: &Tensor,
    p: &Conv1DParams,
    output: &Tensor,
    upstream: &Tensor,
) -> Result<LayerGradients<Conv1DParams>> {
    let out_len = p.check_input(x)?;
    let filters = p.filters();
    let expected = [out_len, filters];
    if upstream.shape() != expected || output.shape() != expected {
        return Err(Error::Dimension {
            op: "conv1d_backward",
            left: upstream.shape().to_vec(),
            right: expected.to_vec(),
        });
    }
    let c = p.in_channels();
    let span = p.kernel_size() * c;
    let mut grads = p.zeros_like();
    let mut dx = vec![0.0; x.len()];
    for t in 0..out_len {
        let window = &x.data()[t * c..t * c + span];
        for f in 0..filters {
            if output.at(t, f) <= 0.0 {
                continue;
            }
            let g = upstream.at(t, f);
            grads.bias.data_mut()[f] += g;
            axpy(grads.kernels.row_mut(f), g, window);
            axpy(&mut dx[t * c..t * c + span], g, p.kernels.row(f));
        }
    }
    Ok(LayerGradients {
        params: grads,
        input: Tensor::from_parts(x.shape().to_vec(), dx),
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{max_rel_err, numeric_grad};
    use super::*;

    fn naive(x: &Tensor, p: &Conv1DParams) -> Vec<f64> {
        let (f_n, k, c) = (p.filters(), p.kernel_size(), p.in_channels());
        let out_len = x.rows() - k + 1;
        let mut out = Vec::new();
        for t in 0..out_len {
            for f in 0..f_n {
                let mut s = p.bias.data()[f];
                for j in 0..k {
                    for ch in 0..c {
                        s += p.kernels.data()[(f * k + j) * c + ch] * x.at(t + j, ch);
                    }
                }
                out.push(s.max(0.0));
            }
        }
        out
    }

    #[test]
    fn hand_sum_and_relu_clamp() {
        let x = Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let mut p = Conv1DParams {
            kernels: Tensor::filled(&[1, 2, 1], 1.0),
            bias: Tensor::zeros(&[1]),
        };
        assert_eq!(conv1d_forward(&x, &p).unwrap().data(), &[3.0, 5.0]);
        p.kernels.data_mut().fill(0.0);
        p.bias.data_mut()[0] = -1.0;
        assert_eq!(conv1d_forward(&x, &p).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = Rng::new(21);
        let x = uniform_init(&mut rng, &[30, 1], 1.0).unwrap();
        let mut p = Conv1DParams::init(&mut rng, 4, 2, 1).unwrap();
        p.bias = uniform_init(&mut rng, &[4], 0.5).unwrap();
        let got = conv1d_forward(&x, &p).unwrap();
        for (g, e) in got.data().iter().zip(naive(&x, &p)) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn short_input_is_rejected() {
        let p = Conv1DParams::init(&mut Rng::new(0), 2, 3, 1).unwrap();
        assert!(conv1d_forward(&Tensor::zeros(&[2, 1]), &p).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = Rng::new(1);
        let x = uniform_init(&mut rng, &[6, 2], 1.0).unwrap();
        let p = Conv1DParams::init(&mut rng, 3, 2, 2).unwrap();
        let out = conv1d_forward(&x, &p).unwrap();
        let g = conv1d_backward(&x, &p, &out, &Tensor::zeros(out.shape())).unwrap();
        assert_eq!(g.params.kernels.max_abs() + g.params.bias.max_abs() + g.input.max_abs(), 0.0);
    }

    #[test]
    fn bias_gradient_is_masked_column_sum() {
        let mut rng = Rng::new(2);
        let x = uniform_init(&mut rng, &[8, 1], 1.0).unwrap();
        let p = Conv1DParams::init(&mut rng, 3, 2, 1).unwrap();
        let out = conv1d_forward(&x, &p).unwrap();
        let up = uniform_init(&mut rng, out.shape(), 1.0).unwrap();
        let g = conv1d_backward(&x, &p, &out, &up).unwrap();
        for f in 0..3 {
            let expected: f64 = (0..out.rows())
                .filter(|&t| out.at(t, f) > 0.0)
                .map(|t| up.at(t, f))
                .sum();
            assert!((g.params.bias.data()[f] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(4);
        let x = uniform_init(&mut rng, &[7, 2], 1.0).unwrap();
        let mut p = Conv1DParams::init(&mut rng, 3, 2, 2).unwrap();
        p.bias = Tensor::filled(&[3], 0.3);
        let up = uniform_init(&mut rng, &[6, 3], 1.0).unwrap();
        let loss = |x: &Tensor, p: &Conv1DParams| {
            conv1d_forward(x, p)
                .unwrap()
                .data()
                .iter()
                .zip(up.data())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        let out = conv1d_forward(&x, &p).unwrap();
        let g = conv1d_backward(&x, &p, &out, &up).unwrap();
        let h = 1e-5;
        let nx = numeric_grad(x.data(), h, |d| {
            loss(&Tensor::new(x.shape().to_vec(), d.to_vec()).unwrap(), &p)
        });
        assert!(max_rel_err(g.input.data(), &nx) < 1e-6);
        let nk = numeric_grad(p.kernels.data(), h, |d| {
            let mut q = p.clone();
            q.kernels.data_mut().copy_from_slice(d);
            loss(&x, &q)
        });
        assert!(max_rel_err(g.params.kernels.data(), &nk) < 1e-6);
    }

    #[test]
    fn parameter_count_formula() {
        let p = Conv1DParams::init(&mut Rng::new(0), 256, 2, 1).unwrap();
        assert_eq!(p.num_params(), Conv1DParams::count(256, 2, 1));
        assert_eq!(p.num_params(), 768);
    }
}
