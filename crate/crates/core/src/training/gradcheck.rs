//! Finite-difference verification of the full model backward pass.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::layers::{LstmFault, Mode};
use crate::model::{Model, ModelConfig};
use crate::tensor::{uniform_init, Rng, Tensor};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for the relative error, so exact zeros compare by absolute error.
pub const REL_ERR_FLOOR: f64 = 1e-6;
/// Minimum distance of every ReLU pre-activation from its kink at the check point.
const KINK_MARGIN: f64 = 1e-3;
const MAX_DRAWS: usize = 100;
const MAX_PARAMS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockReport {
    pub name: String,
    pub elements: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub step: f64,
    /// Parameter points drawn before one cleared every ReLU kink.
    pub draws: usize,
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &BlockReport> {
        self.blocks.iter().filter(|b| !b.passed)
    }

    pub fn worst(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_err).fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares analytic gradients of `0.5 (prediction - target)²` with central
/// differences for every parameter tensor of a model built from `config`.
///
/// The check point is a random parameter vector with no exact zeros; points
/// with a ReLU pre-activation within reach of its kink are redrawn. Dropout
/// runs in train mode with the mask frozen across all evaluations.
pub fn gradient_check(config: &ModelConfig, tolerance: f64, rng: &mut Rng) -> Result<GradCheckReport> {
    gradient_check_with(config, tolerance, rng, LstmFault::None)
}

pub(crate) fn gradient_check_with(
    config: &ModelConfig,
    tolerance: f64,
    rng: &mut Rng,
    fault: LstmFault,
) -> Result<GradCheckReport> {
    let mut model = Model::build(config.clone(), rng)?;
    if model.total_params() >= MAX_PARAMS {
        return Err(Error::Config(format!(
            "gradient check needs fewer than {MAX_PARAMS} parameters, config has {}",
            model.total_params()
        )));
    }
    let base = model.clone();
    let dropout_seed = rng.fork();
    let loss = |m: &Model, x: &Tensor, target: f64| -> Result<f64> {
        let (pred, _) = m.forward(x, Mode::Train, &mut dropout_seed.clone())?;
        Ok(0.5 * (pred - target) * (pred - target))
    };

    let mut draws = 0;
    let (window, target, cache) = loop {
        draws += 1;
        for (t, b) in model.tensors_mut().into_iter().zip(base.tensors()) {
            let noise = uniform_init(rng, t.shape(), 0.1)?;
            for ((v, &b), n) in t.data_mut().iter_mut().zip(b.data()).zip(noise.data()) {
                *v = b + n;
            }
        }
        let window = uniform_init(rng, &[config.window, config.features], 1.0)?;
        let target = 2.0 * rng.uniform() - 1.0;
        let (_, cache) = model.forward(&window, Mode::Train, &mut dropout_seed.clone())?;
        if model.relu_margin(&cache) > KINK_MARGIN || draws >= MAX_DRAWS {
            break (window, target, cache);
        }
    };

    let grads = model.backward_with(&cache, cache.prediction - target, fault)?;
    let names = model.block_names();
    let analytic: Vec<Tensor> = grads.tensors().into_iter().cloned().collect();
    let mut probe = model.clone();
    let mut blocks = Vec::with_capacity(names.len());
    for (k, name) in names.into_iter().enumerate() {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        let n = analytic[k].len();
        for i in 0..n {
            let orig = probe.tensors()[k].data()[i];
            probe.tensors_mut()[k].data_mut()[i] = orig + FD_STEP;
            let up = loss(&probe, &window, target)?;
            probe.tensors_mut()[k].data_mut()[i] = orig - FD_STEP;
            let down = loss(&probe, &window, target)?;
            probe.tensors_mut()[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[k].data()[i];
            max_rel = max_rel.max(relative_error(a, numeric));
            max_abs = max_abs.max((a - numeric).abs());
        }
        blocks.push(BlockReport {
            name,
            elements: n,
            max_rel_err: max_rel,
            max_abs_err: max_abs,
            passed: max_rel < tolerance,
        });
    }
    Ok(GradCheckReport {
        tolerance,
        step: FD_STEP,
        draws,
        blocks,
    })
}
