use serde::{Deserialize, Serialize};

use super::{axpy, dot, init_limit, LayerGradients, Parameterized};
use crate::error::{Error, Result};
use crate::tensor::{uniform_init, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `out x in`
    pub weights: Tensor,
    /// `out`
    pub bias: Tensor,
}

impl DenseParams {
    pub fn init(rng: &mut Rng, inputs: usize, outputs: usize) -> Result<Self> {
        Ok(Self {
            weights: uniform_init(rng, &[outputs, inputs], init_limit(inputs))?,
            bias: Tensor::zeros(&[outputs]),
        })
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }

    /// `out * (in + 1)`
    pub fn count(inputs: usize, outputs: usize) -> usize {
        outputs * (inputs + 1)
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.len() != self.inputs() {
            return Err(Error::Dimension {
                op: "dense",
                left: x.shape().to_vec(),
                right: self.weights.shape().to_vec(),
            });
        }
        Ok(())
    }
}

impl Parameterized for DenseParams {
    fn names(&self) -> Vec<&'static str> {
        vec!["weights", "bias"]
    }

    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.weights, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weights, &mut self.bias]
    }
}

/// `act(W x + b)`
pub fn dense_forward(x: &Tensor, p: &DenseParams, activation: Activation) -> Result<Tensor> {
    p.check(x)?;
    let out = (0..p.outputs())
        .map(|o| {
            let z = p.bias.data()[o] + dot(p.weights.row(o), x.data());
            match activation {
                Activation::Relu if z <= 0.0 => 0.0,
                _ => z,
            }
        })
        .collect();
    Ok(Tensor::from_parts(vec![p.outputs()], out))
}

pub fn dense_backward(
    x: &Tensor,
    p: &DenseParams,
    activation: Activation,
    output: &Tensor,
    upstream: &Tensor,
) -> Result<LayerGradients<DenseParams>> {
    p.check(x)?;
    if upstream.len() != p.outputs() || output.len() != p.outputs() {
        return Err(Error::Dimension {
            op: "dense_backward",
            left: upstream.shape().to_vec(),
            right: vec![p.outputs()],
        });
    }
    let mut grads = p.zeros_like();
    let mut dx = vec![0.0; p.inputs()];
    for o in 0..p.outputs() {
        let g = match activation {
            Activation::Relu if output.data()[o] <= 0.0 => continue,
            _ => upstream.data()[o],
        };
        grads.bias.data_mut()[o] = g;
        axpy(grads.weights.row_mut(o), g, x.data());
        axpy(&mut dx, g, p.weights.row(o));
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

    #[test]
    fn identity_and_clamp() {
        let p = DenseParams {
            weights: Tensor::identity(3),
            bias: Tensor::zeros(&[3]),
        };
        let x = Tensor::vector(vec![1.0, -2.0, 3.0]).unwrap();
        assert_eq!(dense_forward(&x, &p, Activation::Linear).unwrap(), x);
        let p = DenseParams {
            weights: Tensor::matrix(&[&[2.0, 3.0]]).unwrap(),
            bias: Tensor::vector(vec![-10.0]).unwrap(),
        };
        let ones = Tensor::filled(&[2], 1.0);
        assert_eq!(dense_forward(&ones, &p, Activation::Relu).unwrap().data(), &[0.0]);
    }

    #[test]
    fn shape_mismatch() {
        let p = DenseParams::init(&mut Rng::new(0), 3, 2).unwrap();
        assert!(matches!(
            dense_forward(&Tensor::zeros(&[4]), &p, Activation::Linear),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(9);
        let x = uniform_init(&mut rng, &[5], 1.0).unwrap();
        let mut p = DenseParams::init(&mut rng, 5, 4).unwrap();
        p.bias = Tensor::filled(&[4], 0.2);
        let up = uniform_init(&mut rng, &[4], 1.0).unwrap();
        for act in [Activation::Linear, Activation::Relu] {
            let loss = |x: &Tensor, p: &DenseParams| {
                dense_forward(x, p, act).unwrap().data().iter().zip(up.data()).map(|(a, b)| a * b).sum::<f64>()
            };
            let out = dense_forward(&x, &p, act).unwrap();
            let g = dense_backward(&x, &p, act, &out, &up).unwrap();
            let nw = numeric_grad(p.weights.data(), 1e-5, |d| {
                let mut q = p.clone();
                q.weights.data_mut().copy_from_slice(d);
                loss(&x, &q)
            });
            let nx = numeric_grad(x.data(), 1e-5, |d| loss(&Tensor::vector(d.to_vec()).unwrap(), &p));
            let nb = numeric_grad(p.bias.data(), 1e-5, |d| {
                let mut q = p.clone();
                q.bias.data_mut().copy_from_slice(d);
                loss(&x, &q)
            });
            assert!(max_rel_err(g.params.weights.data(), &nw) < 1e-6);
            assert!(max_rel_err(g.params.bias.data(), &nb) < 1e-6);
            assert!(max_rel_err(g.input.data(), &nx) < 1e-6);
        }
    }

    #[test]
    fn parameter_count_formula() {
        assert_eq!(DenseParams::count(256, 100), 25_700);
        assert_eq!(DenseParams::init(&mut Rng::new(0), 100, 1).unwrap().num_params(), 101);
    }
}
