use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-major reshape of a `T x C` tensor into a vector of length `T * C`.
pub fn flatten(x: &Tensor) -> Tensor {
    Tensor::from_parts(vec![x.len()], x.data().to_vec())
}

pub fn unflatten(v: &Tensor, shape: &[usize]) -> Result<Tensor> {
    v.reshape(shape)
}

/// Copies `v` into each of `n` rows.
pub fn repeat_vector(v: &Tensor, n: usize) -> Result<Tensor> {
    if n < 1 {
        return Err(Error::Parameter("repeat count must be at least 1".into()));
    }
    let d = v.len();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        data.extend_from_slice(v.data());
    }
    Ok(Tensor::from_parts(vec![n, d], data))
}

/// Backward of [`repeat_vector`]: sums the upstream rows.
pub fn repeat_backward(upstream: &Tensor) -> Tensor {
    let d = upstream.cols();
    let mut out = vec![0.0; d];
    for t in 0..upstream.rows() {
        for (o, &g) in out.iter_mut().zip(upstream.row(t)) {
            *o += g;
        }
    }
    Tensor::from_parts(vec![d], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeat_and_its_backward() {
        let v = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let r = repeat_vector(&v, 3).unwrap();
        assert_eq!(r.shape(), &[3, 2]);
        assert_eq!(r.data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(repeat_vector(&v, 0).is_err());
        let up = Tensor::matrix(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]).unwrap();
        assert_eq!(repeat_backward(&up).data(), &[2.0, 2.0]);
    }

    #[test]
    fn flatten_round_trip() {
        let x = Tensor::matrix(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        let f = flatten(&x);
        assert_eq!(f.shape(), &[6]);
        assert_eq!(unflatten(&f, &[2, 3]).unwrap(), x);
    }
}
