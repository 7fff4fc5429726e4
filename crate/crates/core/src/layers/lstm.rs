//! Standard forget-gate LSTM with full backpropagation through time, and the
//! bidirectional wrapper that concatenates the final states of both directions.
//!
//! Gate rows are stacked in the order input, forget, cell candidate, output:
//! row block `k` of every weight matrix and of the bias belongs to gate `k`.
//!
//! ```text
//! i = σ(W_i x_t + U_i h_{t-1} + b_i)    f = σ(W_f x_t + U_f h_{t-1} + b_f)
//! g = tanh(W_c x_t + U_c h_{t-1} + b_c) o = σ(W_o x_t + U_o h_{t-1} + b_o)
//! c_t = f ⊙ c_{t-1} + i ⊙ g              h_t = o ⊙ tanh(c_t)
//! ```

use super::{axpy, dot, init_limit, LayerGradients, Parameterized};
use crate::error::{Error, Result};
use crate::tensor::{sigmoid, uniform_init, Rng, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4u x d`
    pub input_weights: Tensor,
    /// `4u x u`
    pub recurrent_weights: Tensor,
    /// `4u`
    pub bias: Tensor,
}

impl LstmParams {
    /// Weights uniform in `±sqrt(1/fan_in)`, forget-gate bias 1, other biases 0.
    pub fn init(rng: &mut Rng, input_dim: usize, units: usize) -> Result<Self> {
        let mut bias = Tensor::zeros(&[4 * units]);
        bias.data_mut()[units..2 * units].fill(1.0);
        Ok(Self {
            input_weights: uniform_init(rng, &[4 * units, input_dim], init_limit(input_dim))?,
            recurrent_weights: uniform_init(rng, &[4 * units, units], init_limit(units))?,
            bias,
        })
    }

    pub fn units(&self) -> usize {
        self.recurrent_weights.shape()[1]
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.shape()[1]
    }

    /// `4 * units * (input_dim + units + 1)`
    pub fn count(input_dim: usize, units: usize) -> usize {
        4 * units * (input_dim + units + 1)
    }
}

impl Parameterized for LstmParams {
    fn names(&self) -> Vec<&'static str> {
        vec!["input_weights", "recurrent_weights", "bias"]
    }

    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.input_weights, &self.recurrent_weights, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.input_weights,
            &mut self.recurrent_weights,
            &mut self.bias,
        ]
    }
}

/// Per-step activations retained for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCache {
    steps: usize,
    units: usize,
    /// `T x 4u`: activated i, f, g, o
    gates: Vec<f64>,
    /// `T x u`
    cells: Vec<f64>,
    /// `T x u`: tanh(c_t)
    cell_tanh: Vec<f64>,
    /// `T x u`
    hidden: Vec<f64>,
}

impl LstmCache {
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// All hidden states, `T x u`.
    pub fn hidden(&self) -> Tensor {
        Tensor::from_parts(vec![self.steps, self.units], self.hidden.clone())
    }

    /// Final hidden state `h_T`.
    pub fn last_hidden(&self) -> Tensor {
        let u = self.units;
        Tensor::from_parts(vec![u], self.hidden[(self.steps - 1) * u..].to_vec())
    }
}

/// Test-only corruption of the backward pass, used to show the gradient check catches bugs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LstmFault {
    None,
    #[cfg_attr(not(test), allow(dead_code))]
    /// Drops the `f ⊙ dc_t` carry into `dc_{t-1}`.
    DropForgetCarry,
}

fn check_input(x: &Tensor, p: &LstmParams) -> Result<()> {
    if x.shape().len() != 2 || x.cols() != p.input_dim() {
        return Err(Error::Dimension {
            op: "lstm",
            left: x.shape().to_vec(),
            right: p.input_weights.shape().to_vec(),
        });
    }
    Ok(())
}

fn project(x: &[f64], p: &LstmParams) -> Vec<f64> {
    (0..p.input_weights.rows())
        .map(|r| dot(p.input_weights.row(r), x))
        .collect()
}

/// Runs the recurrence given the input projections `W x_t` for each step.
fn run<'a>(steps: usize, p: &LstmParams, projection: impl Fn(usize) -> &'a [f64]) -> LstmCache {
    let u = p.units();
    let mut cache = LstmCache {
        steps,
        units: u,
        gates: vec![0.0; steps * 4 * u],
        cells: vec![0.0; steps * u],
        cell_tanh: vec![0.0; steps * u],
        hidden: vec![0.0; steps * u],
    };
    let zeros = vec![0.0; u];
    for t in 0..steps {
        let proj = projection(t);
        let (h_prev, c_prev) = if t == 0 {
            (&zeros[..], &zeros[..])
        } else {
            (
                &cache.hidden[(t - 1) * u..t * u],
                &cache.cells[(t - 1) * u..t * u],
            )
        };
        let mut z: Vec<f64> = (0..4 * u)
            .map(|r| proj[r] + dot(p.recurrent_weights.row(r), h_prev) + p.bias.data()[r])
            .collect();
        for (r, v) in z.iter_mut().enumerate() {
            *v = if (2 * u..3 * u).contains(&r) {
                v.tanh()
            } else {
                sigmoid(*v)
            };
        }
        let mut c = vec![0.0; u];
        let mut ct = vec![0.0; u];
        let mut h = vec![0.0; u];
        for j in 0..u {
            let (i, f, g, o) = (z[j], z[u + j], z[2 * u + j], z[3 * u + j]);
            c[j] = f * c_prev[j] + i * g;
            ct[j] = c[j].tanh();
            h[j] = o * ct[j];
        }
        cache.gates[t * 4 * u..(t + 1) * 4 * u].copy_from_slice(&z);
        cache.cells[t * u..(t + 1) * u].copy_from_slice(&c);
        cache.cell_tanh[t * u..(t + 1) * u].copy_from_slice(&ct);
        cache.hidden[t * u..(t + 1) * u].copy_from_slice(&h);
    }
    cache
}

pub fn lstm_forward_cached(x: &Tensor, p: &LstmParams) -> Result<LstmCache> {
    check_input(x, p)?;
    if x.rows() == 0 {
        return Err(Error::Shape("lstm needs a non-empty sequence".into()));
    }
    let proj: Vec<Vec<f64>> = (0..x.rows()).map(|t| project(x.row(t), p)).collect();
    Ok(run(x.rows(), p, |t| &proj[t]))
}

/// Forward pass from `h_0 = c_0 = 0`. Returns `T x u` states, or only `h_T` as a `u` vector.
pub fn lstm_forward(x: &Tensor, p: &LstmParams, return_sequences: bool) -> Result<Tensor> {
    let cache = lstm_forward_cached(x, p)?;
    Ok(if return_sequences {
        cache.hidden()
    } else {
        cache.last_hidden()
    })
}

/// Forward pass over `steps` copies of the same input vector. Equivalent to
/// `lstm_forward_cached(repeat_vector(v, steps))` but projects the input once.
pub fn lstm_forward_repeated(v: &Tensor, steps: usize, p: &LstmParams) -> Result<LstmCache> {
    if v.len() != p.input_dim() {
        return Err(Error::Dimension {
            op: "lstm_repeated",
            left: v.shape().to_vec(),
            right: p.input_weights.shape().to_vec(),
        });
    }
    if steps == 0 {
        return Err(Error::Shape("lstm needs a non-empty sequence".into()));
    }
    let proj = project(v.data(), p);
    Ok(run(steps, p, |_| &proj))
}

/// Gradients w.r.t. the gate pre-activations for every step (`T x 4u`),
/// accumulating the recurrent-weight and bias gradients into `grads`.
fn preactivation_grads(
    p: &LstmParams,
    cache: &LstmCache,
    upstream: &Tensor,
    grads: &mut LstmParams,
    fault: LstmFault,
) -> Result<Vec<f64>> {
    let (steps, u) = (cache.steps, cache.units);
    if u != p.units() {
        return Err(Error::Consistency(format!(
            "cache has {u} units, parameters have {}",
            p.units()
        )));
    }
    if upstream.shape() != [steps, u] {
        return Err(Error::Dimension {
            op: "lstm_backward",
            left: upstream.shape().to_vec(),
            right: vec![steps, u],
        });
    }
    let mut dz_all = vec![0.0; steps * 4 * u];
    let mut dh_next = vec![0.0; u];
    let mut dc_next = vec![0.0; u];
    let zeros = vec![0.0; u];
    for t in (0..steps).rev() {
        let gates = &cache.gates[t * 4 * u..(t + 1) * 4 * u];
        let ct = &cache.cell_tanh[t * u..(t + 1) * u];
        let (h_prev, c_prev) = if t == 0 {
            (&zeros[..], &zeros[..])
        } else {
            (
                &cache.hidden[(t - 1) * u..t * u],
                &cache.cells[(t - 1) * u..t * u],
            )
        };
        let dz = &mut dz_all[t * 4 * u..(t + 1) * 4 * u];
        for j in 0..u {
            let (i, f, g, o) = (gates[j], gates[u + j], gates[2 * u + j], gates[3 * u + j]);
            let dh = upstream.at(t, j) + dh_next[j];
            let dc = dc_next[j] + dh * o * (1.0 - ct[j] * ct[j]);
            dz[j] = dc * g * i * (1.0 - i);
            dz[u + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[2 * u + j] = dc * i * (1.0 - g * g);
            dz[3 * u + j] = dh * ct[j] * o * (1.0 - o);
            dc_next[j] = match fault {
                LstmFault::None => dc * f,
                LstmFault::DropForgetCarry => 0.0,
            };
        }
        dh_next.fill(0.0);
        for (r, &d) in dz.iter().enumerate() {
            grads.bias.data_mut()[r] += d;
            axpy(grads.recurrent_weights.row_mut(r), d, h_prev);
            axpy(&mut dh_next, d, p.recurrent_weights.row(r));
        }
    }
    Ok(dz_all)
}

pub(crate) fn lstm_backward_with(
    x: &Tensor,
    p: &LstmParams,
    cache: &LstmCache,
    upstream: &Tensor,
    fault: LstmFault,
) -> Result<LayerGradients<LstmParams>> {
    check_input(x, p)?;
    if x.rows() != cache.steps {
        return Err(Error::Consistency(format!(
            "input has {} steps, cache has {}",
            x.rows(),
            cache.steps
        )));
    }
    let mut grads = p.zeros_like();
    let dz = preactivation_grads(p, cache, upstream, &mut grads, fault)?;
    let four_u = 4 * p.units();
    let mut dx = vec![0.0; x.len()];
    let d = p.input_dim();
    for t in 0..cache.steps {
        let dz_t = &dz[t * four_u..(t + 1) * four_u];
        let dx_t = &mut dx[t * d..(t + 1) * d];
        for (r, &g) in dz_t.iter().enumerate() {
            axpy(grads.input_weights.row_mut(r), g, x.row(t));
            axpy(dx_t, g, p.input_weights.row(r));
        }
    }
    Ok(LayerGradients {
        params: grads,
        input: Tensor::from_parts(x.shape().to_vec(), dx),
    })
}

/// Backpropagation through time. `upstream` is `T x u`, the loss gradient for
/// every emitted hidden state (zero rows for states that were not used).
pub fn lstm_backward(
    x: &Tensor,
    p: &LstmParams,
    cache: &LstmCache,
    upstream: &Tensor,
) -> Result<LayerGradients<LstmParams>> {
    lstm_backward_with(x, p, cache, upstream, LstmFault::None)
}

pub(crate) fn lstm_backward_repeated_with(
    v: &Tensor,
    p: &LstmParams,
    cache: &LstmCache,
    upstream: &Tensor,
    fault: LstmFault,
) -> Result<LayerGradients<LstmParams>> {
    if v.len() != p.input_dim() {
        return Err(Error::Consistency("repeated input does not match parameters".into()));
    }
    let mut grads = p.zeros_like();
    let dz = preactivation_grads(p, cache, upstream, &mut grads, fault)?;
    let four_u = 4 * p.units();
    let mut dz_sum = vec![0.0; four_u];
    for t in 0..cache.steps {
        for (s, &g) in dz_sum.iter_mut().zip(&dz[t * four_u..(t + 1) * four_u]) {
            *s += g;
        }
    }
    let mut dv = vec![0.0; v.len()];
    for (r, &g) in dz_sum.iter().enumerate() {
        axpy(grads.input_weights.row_mut(r), g, v.data());
        axpy(&mut dv, g, p.input_weights.row(r));
    }
    Ok(LayerGradients {
        params: grads,
        input: Tensor::from_parts(v.shape().to_vec(), dv),
    })
}

/// Backward of [`lstm_forward_repeated`]; the input gradient is summed over steps into a `d` vector.
pub fn lstm_backward_repeated(
    v: &Tensor,
    p: &LstmParams,
    cache: &LstmCache,
    upstream: &Tensor,
) -> Result<LayerGradients<LstmParams>> {
    lstm_backward_repeated_with(v, p, cache, upstream, LstmFault::None)
}

/// Forward and backward directions with concatenated final states.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmParams {
    pub fn init(rng: &mut Rng, input_dim: usize, units: usize) -> Result<Self> {
        Ok(Self {
            forward: LstmParams::init(rng, input_dim, units)?,
            backward: LstmParams::init(rng, input_dim, units)?,
        })
    }

    pub fn units(&self) -> usize {
        self.forward.units()
    }

    pub fn count(input_dim: usize, units: usize) -> usize {
        2 * LstmParams::count(input_dim, units)
    }
}

impl Parameterized for BiLstmParams {
    fn names(&self) -> Vec<&'static str> {
        vec![
            "forward.input_weights",
            "forward.recurrent_weights",
            "forward.bias",
            "backward.input_weights",
            "backward.recurrent_weights",
            "backward.bias",
        ]
    }

    fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.forward.tensors();
        out.extend(self.backward.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.forward.tensors_mut();
        out.extend(self.backward.tensors_mut());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmCache {
    pub forward: LstmCache,
    pub backward: LstmCache,
}

fn reversed(x: &Tensor) -> Tensor {
    let data = (0..x.rows()).rev().flat_map(|t| x.row(t).iter().copied()).collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

pub fn bilstm_forward_cached(x: &Tensor, p: &BiLstmParams) -> Result<(Tensor, BiLstmCache)> {
    let forward = lstm_forward_cached(x, &p.forward)?;
    let backward = lstm_forward_cached(&reversed(x), &p.backward)?;
    let mut out = forward.last_hidden().into_data();
    out.extend_from_slice(backward.last_hidden().data());
    let n = out.len();
    Ok((
        Tensor::from_parts(vec![n], out),
        BiLstmCache { forward, backward },
    ))
}

/// `[h_T of the forward pass ; h_T of the pass over the reversed sequence]`, length `2u`.
pub fn bilstm_forward(x: &Tensor, p: &BiLstmParams) -> Result<Tensor> {
    Ok(bilstm_forward_cached(x, p)?.0)
}

pub(crate) fn bilstm_backward_with(
    x: &Tensor,
    p: &BiLstmParams,
    cache: &BiLstmCache,
    upstream: &Tensor,
    fault: LstmFault,
) -> Result<LayerGradients<BiLstmParams>> {
    let u = p.units();
    if upstream.len() != 2 * u {
        return Err(Error::Dimension {
            op: "bilstm_backward",
            left: upstream.shape().to_vec(),
            right: vec![2 * u],
        });
    }
    let steps = x.rows();
    let last_only = |half: &[f64]| {
        let mut g = Tensor::zeros(&[steps, u]);
        g.row_mut(steps - 1).copy_from_slice(half);
        g
    };
    let fwd = lstm_backward_with(
        x,
        &p.forward,
        &cache.forward,
        &last_only(&upstream.data()[..u]),
        fault,
    )?;
    let bwd = lstm_backward_with(
        &reversed(x),
        &p.backward,
        &cache.backward,
        &last_only(&upstream.data()[u..]),
        fault,
    )?;
    let bwd_input = reversed(&bwd.input);
    let dx = fwd
        .input
        .data()
        .iter()
        .zip(bwd_input.data())
        .map(|(a, b)| a + b)
        .collect();
    Ok(LayerGradients {
        params: BiLstmParams {
            forward: fwd.params,
            backward: bwd.params,
        },
        input: Tensor::from_parts(x.shape().to_vec(), dx),
    })
}

pub fn bilstm_backward(
    x: &Tensor,
    p: &BiLstmParams,
    cache: &BiLstmCache,
    upstream: &Tensor,
) -> Result<LayerGradients<BiLstmParams>> {
    bilstm_backward_with(x, p, cache, upstream, LstmFault::None)
}
