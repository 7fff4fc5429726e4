//! The full forecaster stack:
//!
//! ```text
//! Conv1D(256, k=2, ReLU) → Conv1D(128, k=2, ReLU) → Flatten → RepeatVector(W)
//!   → LSTM(100) → Dropout(0.2) → LSTM(100) ×3 → BiLSTM(128, concat, last state)
//!   → Dense(100, ReLU) → Dense(1, linear)
//! ```
//!
//! Parameters are enumerated in exactly this layer order; checkpoints and
//! optimizer state depend on it.

mod checkpoint;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load, save, Bundle, FORMAT_VERSION};

use crate::error::{Error, Result};
use crate::layers::{
    self, bilstm_forward_cached, conv1d_backward, conv1d_forward, dense_backward, dense_forward,
    dropout, dropout_backward, flatten, lstm_forward_cached,
    lstm_forward_repeated, Activation, BiLstmCache, BiLstmParams, Conv1DParams, DenseParams,
    DropoutMask, LstmCache, LstmFault, LstmParams, Mode, Parameterized,
};
use crate::tensor::{Rng, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub window: usize,
    pub features: usize,
    pub conv_filters: Vec<usize>,
    pub kernel: usize,
    pub lstm_units: usize,
    pub lstm_stack_depth: usize,
    pub dropout_rate: f64,
    pub bilstm_units: usize,
    pub dense_units: usize,
    pub output_units: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            window: 30,
            features: 1,
            conv_filters: vec![256, 128],
            kernel: 2,
            lstm_units: 100,
            lstm_stack_depth: 4,
            dropout_rate: 0.2,
            bilstm_units: 128,
            dense_units: 100,
            output_units: 1,
            seed: 42,
        }
    }
}

impl ModelConfig {
    /// Down-scaled configuration used for gradient checks.
    pub fn tiny() -> Self {
        Self {
            window: 6,
            features: 1,
            conv_filters: vec![4, 4],
            kernel: 2,
            lstm_units: 3,
            lstm_stack_depth: 2,
            dropout_rate: 0.2,
            bilstm_units: 3,
            dense_units: 5,
            output_units: 1,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("window", self.window),
            ("features", self.features),
            ("kernel", self.kernel),
            ("lstm_units", self.lstm_units),
            ("lstm_stack_depth", self.lstm_stack_depth),
            ("bilstm_units", self.bilstm_units),
            ("dense_units", self.dense_units),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
            return Err(Error::Config("conv_filters must be non-empty and positive".into()));
        }
        if self.output_units != 1 {
            return Err(Error::Config("the regression head has exactly one output".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.kernel > self.window {
            return Err(Error::Config(format!(
                "kernel {} exceeds window {}",
                self.kernel, self.window
            )));
        }
        let shrink = self.conv_filters.len() * (self.kernel - 1);
        if shrink >= self.window {
            return Err(Error::Config(format!(
                "window {} too short for {} convolutions of kernel {}",
                self.window,
                self.conv_filters.len(),
                self.kernel
            )));
        }
        Ok(())
    }

    /// Sequence length after the convolution stack (valid padding).
    pub fn conv_output_len(&self) -> usize {
        self.window - self.conv_filters.len() * (self.kernel - 1)
    }

    /// Width of the flattened convolution features fed to the first LSTM at every step.
    pub fn flat_dim(&self) -> usize {
        self.conv_output_len() * self.conv_filters.last().copied().unwrap_or(0)
    }

    /// Closed-form parameter count per layer, in parameter order.
    pub fn layer_counts(&self) -> Vec<LayerCount> {
        let mut rows = Vec::new();
        let mut channels = self.features;
        for (i, &f) in self.conv_filters.iter().enumerate() {
            rows.push(LayerCount::new(format!("conv1d_{}", i + 1), Conv1DParams::count(f, self.kernel, channels)));
            channels = f;
        }
        let mut input = self.flat_dim();
        for i in 0..self.lstm_stack_depth {
            rows.push(LayerCount::new(format!("lstm_{}", i + 1), LstmParams::count(input, self.lstm_units)));
            input = self.lstm_units;
        }
        rows.push(LayerCount::new("bidirectional", BiLstmParams::count(input, self.bilstm_units)));
        rows.push(LayerCount::new("dense_1", DenseParams::count(2 * self.bilstm_units, self.dense_units)));
        rows.push(LayerCount::new("dense_2", DenseParams::count(self.dense_units, self.output_units)));
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCount {
    pub layer: String,
    pub count: usize,
}

impl LayerCount {
    fn new(layer: impl Into<String>, count: usize) -> Self {
        Self {
            layer: layer.into(),
            count,
        }
    }
}

/// All trainable weights. The same type carries gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub conv: Vec<Conv1DParams>,
    pub lstm: Vec<LstmParams>,
    pub bilstm: BiLstmParams,
    pub hidden: DenseParams,
    pub head: DenseParams,
    /// Bumped on every mutable borrow of the parameters; caches record it.
    generation: u64,
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    input: Tensor,
    conv_outputs: Vec<Tensor>,
    flat: Tensor,
    lstm: Vec<LstmCache>,
    /// Input sequence of LSTM layers 2.. (index 0 is unused).
    lstm_inputs: Vec<Tensor>,
    dropout_mask: DropoutMask,
    bilstm_input: Tensor,
    bilstm: BiLstmCache,
    bilstm_output: Tensor,
    hidden_output: Tensor,
    pub prediction: f64,
}

fn finite(t: &Tensor, layer: &str) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("output of layer {layer}")))
    }
}

impl Model {
    /// Initializes every layer from `rng` in parameter order.
    pub fn build(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut conv = Vec::new();
        let mut channels = config.features;
        for &f in &config.conv_filters {
            conv.push(Conv1DParams::init(rng, f, config.kernel, channels)?);
            channels = f;
        }
        let mut lstm = Vec::new();
        let mut input = config.flat_dim();
        for _ in 0..config.lstm_stack_depth {
            lstm.push(LstmParams::init(rng, input, config.lstm_units)?);
            input = config.lstm_units;
        }
        let bilstm = BiLstmParams::init(rng, input, config.bilstm_units)?;
        let hidden = DenseParams::init(rng, 2 * config.bilstm_units, config.dense_units)?;
        let head = DenseParams::init(rng, config.dense_units, config.output_units)?;
        Ok(Self {
            config,
            conv,
            lstm,
            bilstm,
            hidden,
            head,
            generation: 0,
        })
    }

    /// Builds with a generator seeded from `config.seed`.
    pub fn from_config(config: ModelConfig) -> Result<Self> {
        let mut rng = Rng::new(config.seed);
        Self::build(config, &mut rng)
    }

    /// Parameter tensors in the fixed serialization order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for c in &self.conv {
            out.extend(c.tensors());
        }
        for l in &self.lstm {
            out.extend(l.tensors());
        }
        out.extend(self.bilstm.tensors());
        out.extend(self.hidden.tensors());
        out.extend(self.head.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.generation += 1;
        let mut out = Vec::new();
        for c in &mut self.conv {
            out.extend(c.tensors_mut());
        }
        for l in &mut self.lstm {
            out.extend(l.tensors_mut());
        }
        out.extend(self.bilstm.tensors_mut());
        out.extend(self.hidden.tensors_mut());
        out.extend(self.head.tensors_mut());
        out
    }

    /// `layer.tensor` names matching [`Model::tensors`].
    pub fn block_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |layer: String, names: Vec<&'static str>| {
            out.extend(names.into_iter().map(|n| format!("{layer}.{n}")));
        };
        for (i, c) in self.conv.iter().enumerate() {
            push(format!("conv1d_{}", i + 1), c.names());
        }
        for (i, l) in self.lstm.iter().enumerate() {
            push(format!("lstm_{}", i + 1), l.names());
        }
        push("bidirectional".into(), self.bilstm.names());
        push("dense_1".into(), self.hidden.names());
        push("dense_2".into(), self.head.names());
        out
    }

    /// Per-layer counts taken from the built tensors.
    pub fn count_params(&self) -> Vec<LayerCount> {
        let mut rows = Vec::new();
        for (i, c) in self.conv.iter().enumerate() {
            rows.push(LayerCount::new(format!("conv1d_{}", i + 1), c.num_params()));
        }
        for (i, l) in self.lstm.iter().enumerate() {
            rows.push(LayerCount::new(format!("lstm_{}", i + 1), l.num_params()));
        }
        rows.push(LayerCount::new("bidirectional", self.bilstm.num_params()));
        rows.push(LayerCount::new("dense_1", self.hidden.num_params()));
        rows.push(LayerCount::new("dense_2", self.head.num_params()));
        rows
    }

    pub fn total_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Zero-valued model with the same shapes; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        out
    }

    /// `self += other` element-wise, in parameter order.
    pub fn accumulate(&mut self, other: &Model) {
        let src = other.tensors();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            for (a, b) in dst.data_mut().iter_mut().zip(s.data()) {
                *a += b;
            }
        }
    }

    /// Runs the stack on one `W x F` window. Returns the normalized next-step prediction.
    pub fn forward(&self, window: &Tensor, mode: Mode, rng: &mut Rng) -> Result<(f64, ForwardCache)> {
        let cfg = &self.config;
        if window.shape() != [cfg.window, cfg.features] {
            return Err(Error::Dimension {
                op: "model forward",
                left: window.shape().to_vec(),
                right: vec![cfg.window, cfg.features],
            });
        }
        let mut conv_outputs: Vec<Tensor> = Vec::with_capacity(self.conv.len());
        for (i, p) in self.conv.iter().enumerate() {
            let out = conv1d_forward(conv_outputs.last().unwrap_or(window), p)?;
            finite(&out, &format!("conv1d_{}", i + 1))?;
            conv_outputs.push(out);
        }
        let flat = flatten(conv_outputs.last().unwrap());

        let mut lstm = Vec::with_capacity(self.lstm.len());
        let mut lstm_inputs = vec![Tensor::zeros(&[1])];
        let mut dropout_mask = DropoutMask::Identity;
        let mut seq = Tensor::zeros(&[1]);
        for (i, p) in self.lstm.iter().enumerate() {
            let cache = if i == 0 {
                lstm_forward_repeated(&flat, cfg.window, p)?
            } else {
                lstm_forward_cached(&seq, p)?
            };
            let mut out = cache.hidden();
            finite(&out, &format!("lstm_{}", i + 1))?;
            if i == 0 {
                let (dropped, mask) = dropout(&out, cfg.dropout_rate, mode, rng)?;
                out = dropped;
                dropout_mask = mask;
            }
            lstm.push(cache);
            if i + 1 < self.lstm.len() {
                lstm_inputs.push(out.clone());
            }
            seq = out;
        }

        let (bilstm_output, bilstm) = bilstm_forward_cached(&seq, &self.bilstm)?;
        finite(&bilstm_output, "bidirectional")?;
        let hidden_output = dense_forward(&bilstm_output, &self.hidden, Activation::Relu)?;
        finite(&hidden_output, "dense_1")?;
        let out = dense_forward(&hidden_output, &self.head, Activation::Linear)?;
        finite(&out, "dense_2")?;
        let prediction = out.data()[0];
        Ok((
            prediction,
            ForwardCache {
                generation: self.generation,
                input: window.clone(),
                conv_outputs,
                flat,
                lstm,
                lstm_inputs,
                dropout_mask,
                bilstm_input: seq,
                bilstm,
                bilstm_output,
                hidden_output,
                prediction,
            },
        ))
    }

    /// Eval-mode prediction.
    pub fn predict(&self, window: &Tensor) -> Result<f64> {
        let mut unused = Rng::new(0);
        Ok(self.forward(window, Mode::Eval, &mut unused)?.0)
    }

    /// Gradients of `loss` for every parameter, given `dloss/dprediction`.
    pub fn backward(&self, cache: &ForwardCache, loss_grad: f64) -> Result<Model> {
        self.backward_with(cache, loss_grad, LstmFault::None)
    }

    pub(crate) fn backward_with(
        &self,
        cache: &ForwardCache,
        loss_grad: f64,
        fault: LstmFault,
    ) -> Result<Model> {
        if cache.generation != self.generation || cache.lstm.len() != self.lstm.len() {
            return Err(Error::Consistency(
                "forward cache does not belong to the current parameters".into(),
            ));
        }
        let mut grads = self.zeros_like();

        let up = Tensor::from_parts(vec![1], vec![loss_grad]);
        let head = dense_backward(&cache.hidden_output, &self.head, Activation::Linear, &Tensor::from_parts(vec![1], vec![cache.prediction]), &up)?;
        grads.head = head.params;
        let hidden = dense_backward(&cache.bilstm_output, &self.hidden, Activation::Relu, &cache.hidden_output, &head.input)?;
        grads.hidden = hidden.params;
        let bi = layers::bilstm_backward_with(&cache.bilstm_input, &self.bilstm, &cache.bilstm, &hidden.input, fault)?;
        grads.bilstm = bi.params;

        let mut upstream = bi.input;
        for i in (1..self.lstm.len()).rev() {
            let g = layers::lstm_backward_with(&cache.lstm_inputs[i], &self.lstm[i], &cache.lstm[i], &upstream, fault)?;
            grads.lstm[i] = g.params;
            upstream = g.input;
            if i == 1 {
                upstream = dropout_backward(&upstream, &cache.dropout_mask);
            }
        }
        if self.lstm.len() == 1 {
            upstream = dropout_backward(&upstream, &cache.dropout_mask);
        }
        let first = layers::lstm_backward_repeated_with(&cache.flat, &self.lstm[0], &cache.lstm[0], &upstream, fault)?;
        grads.lstm[0] = first.params;

        let last = cache.conv_outputs.last().unwrap();
        let mut upstream = first.input.reshape(last.shape())?;
        for i in (0..self.conv.len()).rev() {
            let x = if i == 0 { &cache.input } else { &cache.conv_outputs[i - 1] };
            let g = conv1d_backward(x, &self.conv[i], &cache.conv_outputs[i], &upstream)?;
            grads.conv[i] = g.params;
            upstream = g.input;
        }
        Ok(grads)
    }

    /// Smallest |pre-activation| over all ReLU units in the pass recorded by `cache`.
    pub(crate) fn relu_margin(&self, cache: &ForwardCache) -> f64 {
        let mut margin = f64::INFINITY;
        for (i, p) in self.conv.iter().enumerate() {
            let x = if i == 0 { &cache.input } else { &cache.conv_outputs[i - 1] };
            let (c, span) = (p.in_channels(), p.kernel_size() * p.in_channels());
            for t in 0..cache.conv_outputs[i].rows() {
                let window = &x.data()[t * c..t * c + span];
                for f in 0..p.filters() {
                    let z = p.bias.data()[f] + layers::dot(p.kernels.row(f), window);
                    margin = margin.min(z.abs());
                }
            }
        }
        for o in 0..self.hidden.outputs() {
            let z = self.hidden.bias.data()[o]
                + layers::dot(self.hidden.weights.row(o), cache.bilstm_output.data());
            margin = margin.min(z.abs());
        }
        margin
    }

    /// Replaces every tensor with `values` (parameter order), checking shapes.
    pub fn load_tensors(&mut self, values: Vec<Tensor>) -> Result<()> {
        let mut dst = self.tensors_mut();
        if dst.len() != values.len() {
            return Err(Error::Consistency(format!(
                "expected {} parameter tensors, got {}",
                dst.len(),
                values.len()
            )));
        }
        for (d, v) in dst.iter_mut().zip(values) {
            if d.shape() != v.shape() {
                return Err(Error::Dimension {
                    op: "load_tensors",
                    left: d.shape().to_vec(),
                    right: v.shape().to_vec(),
                });
            }
            **d = v;
        }
        Ok(())
    }
}
