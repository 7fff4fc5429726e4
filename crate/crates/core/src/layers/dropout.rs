use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-element survivor scale (`0` or `1 / (1 - rate)`), or identity.
#[derive(Debug, Clone, PartialEq)]
pub enum DropoutMask {
    Identity,
    Scale(Vec<f64>),
}

/// Inverted dropout: in train mode each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`.
pub fn dropout(x: &Tensor, rate: f64, mode: Mode, rng: &mut Rng) -> Result<(Tensor, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Parameter(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), DropoutMask::Identity));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.uniform() < rate { 0.0 } else { keep })
        .collect();
    let out = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((Tensor::from_parts(x.shape().to_vec(), out), DropoutMask::Scale(mask)))
}

pub fn dropout_backward(upstream: &Tensor, mask: &DropoutMask) -> Tensor {
    match mask {
        DropoutMask::Identity => upstream.clone(),
        DropoutMask::Scale(m) => Tensor::from_parts(
            upstream.shape().to_vec(),
            upstream.data().iter().zip(m).map(|(g, s)| g * s).collect(),
        ),
    }
}
