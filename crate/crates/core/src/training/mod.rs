//! Mini-batch Adam training with learning-rate decay and early stopping,
//! evaluation in original units, and the gradient-check harness.

mod early_stopping;
mod gradcheck;
mod metrics;

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use early_stopping::EarlyStopping;
pub use gradcheck::{gradient_check, relative_error, BlockReport, GradCheckReport, FD_STEP, REL_ERR_FLOOR};
pub use metrics::{mse, rmse};

use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::model::Model;
use crate::optimizer::{adam_step, AdamConfig, AdamState, LrSchedule};
use crate::preprocessing::{ScalerParams, WindowedDataset};
use crate::tensor::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    TrainLoss,
    ValLoss,
}

impl fmt::Display for Monitor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Monitor::TrainLoss => "train_loss",
            Monitor::ValLoss => "val_loss",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    /// `None` monitors validation loss when a validation set is given, else training loss.
    pub monitor: Option<Monitor>,
    pub min_delta: f64,
    /// Stepped once per epoch (`t` = completed epochs).
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 300,
            patience: 7,
            batch_size: 32,
            monitor: None,
            min_delta: 0.0,
            schedule: LrSchedule::default(),
            adam: AdamConfig::default(),
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "max_epochs, patience and batch_size must all be at least 1".into(),
            ));
        }
        if self.min_delta.is_nan() || self.min_delta < 0.0 {
            return Err(Error::Config("min_delta must be non-negative".into()));
        }
        LrSchedule::new(self.schedule.initial, self.schedule.decay)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

/// One epoch of training. Losses are MSE in normalized units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
    pub lr: f64,
    /// Wall time of the epoch; excluded from equality.
    pub elapsed_ms: f64,
}

impl PartialEq for EpochRecord {
    fn eq(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.train_mse.to_bits() == other.train_mse.to_bits()
            && self.val_mse.map(f64::to_bits) == other.val_mse.map(f64::to_bits)
            && self.lr.to_bits() == other.lr.to_bits()
    }
}

impl fmt::Display for EpochRecord {
    /// `key=value` log line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch={} train_mse={:e}", self.epoch, self.train_mse)?;
        if let Some(v) = self.val_mse {
            write!(f, " val_mse={v:e}")?;
        }
        write!(f, " lr={:e} elapsed_ms={:.1}", self.lr, self.elapsed_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub monitor: Monitor,
    pub records: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    /// 1-based epoch whose weights were returned.
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn monitored(&self, record: &EpochRecord) -> f64 {
        match self.monitor {
            Monitor::TrainLoss => record.train_mse,
            Monitor::ValLoss => record.val_mse.unwrap_or(f64::NAN),
        }
    }

    pub fn best_record(&self) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.epoch == self.best_epoch)
    }

    /// Full log as `key=value` lines, summary last.
    pub fn to_text(&self) -> String {
        let mut out: String = self.records.iter().map(|r| format!("{r}\n")).collect();
        out.push_str(&format!(
            "stop_reason={} best_epoch={} monitor={}\n",
            match self.stop_reason {
                StopReason::MaxEpochs => "max_epochs",
                StopReason::EarlyStop => "early_stop",
            },
            self.best_epoch,
            self.monitor
        ));
        out
    }
}

/// Eval-mode MSE over a dataset, normalized units.
pub fn dataset_mse(model: &Model, data: &WindowedDataset) -> Result<f64> {
    let predicted = predict_all(model, data)?;
    mse(data.targets.data(), &predicted)
}

pub fn predict_all(model: &Model, data: &WindowedDataset) -> Result<Vec<f64>> {
    (0..data.len()).map(|i| model.predict(&data.window(i))).collect()
}

pub fn train(
    model: Model,
    data: &WindowedDataset,
    validation: Option<&WindowedDataset>,
    cfg: &TrainConfig,
) -> Result<(Model, TrainLog)> {
    train_with_callback(model, data, validation, cfg, |r| log::info!("{r}"))
}

/// Trains until `max_epochs` or early stop and returns the weights of the best
/// monitored epoch. Each epoch shuffles sample order with the seeded generator,
/// and every batch makes one Adam update on the batch-mean squared error.
pub fn train_with_callback(
    mut model: Model,
    data: &WindowedDataset,
    validation: Option<&WindowedDataset>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model, TrainLog)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let monitor = match (cfg.monitor, validation) {
        (Some(Monitor::ValLoss), None) => {
            return Err(Error::Config("val_loss monitor needs a validation set".into()))
        }
        (Some(m), _) => m,
        (None, Some(_)) => Monitor::ValLoss,
        (None, None) => Monitor::TrainLoss,
    };
    let mut rng = Rng::new(cfg.seed);
    let mut adam = AdamState::new(cfg.adam, model.tensors())?;
    let mut stopper = EarlyStopping::new(cfg.patience, cfg.min_delta);
    let mut best = model.clone();
    let mut records = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let lr = cfg.schedule.lr_at(epoch as i64 - 1)?;
        rng.shuffle(&mut order);
        let mut sq_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let diverged = |detail: String| Error::Divergence {
                epoch,
                batch: b + 1,
                detail,
            };
            let mut grads = model.zeros_like();
            let scale = 2.0 / batch.len() as f64;
            for &i in batch {
                let (pred, cache) = model
                    .forward(&data.window(i), Mode::Train, &mut rng)
                    .map_err(|e| diverged(e.to_string()))?;
                let err = pred - data.target(i);
                if !err.is_finite() {
                    return Err(diverged(format!("non-finite loss on sample {i}")));
                }
                sq_sum += err * err;
                grads.accumulate(&model.backward(&cache, scale * err)?);
            }
            let g = grads.tensors();
            adam_step(&mut model.tensors_mut(), &g, &mut adam, lr)
                .map_err(|e| diverged(e.to_string()))?;
        }
        let train_mse = sq_sum / data.len() as f64;
        if !train_mse.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: 0,
                detail: "non-finite epoch loss".into(),
            });
        }
        let val_mse = validation.map(|v| dataset_mse(&model, v)).transpose()?;
        let record = EpochRecord {
            epoch,
            train_mse,
            val_mse,
            lr,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        on_epoch(&record);
        let monitored = match monitor {
            Monitor::TrainLoss => train_mse,
            Monitor::ValLoss => val_mse.unwrap_or(f64::INFINITY),
        };
        records.push(record);
        let stop = stopper.update(epoch, monitored);
        if stopper.improved_at(epoch) {
            best = model.clone();
        }
        if stop {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    Ok((
        best,
        TrainLog {
            monitor,
            records,
            stop_reason,
            best_epoch: stopper.best_epoch(),
        },
    ))
}

/// Errors and the paired series in original units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub mse: f64,
    pub rmse: f64,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

/// Predicts every window, maps predictions and targets back through the
/// scaler (temperature column) and scores them.
pub fn evaluate(model: &Model, data: &WindowedDataset, scaler: &ScalerParams) -> Result<Evaluation> {
    if scaler.features() != model.config.features || data.features() != model.config.features {
        return Err(Error::Consistency(format!(
            "scaler has {} features, model {}, data {}",
            scaler.features(),
            model.config.features,
            data.features()
        )));
    }
    let predicted: Vec<f64> = predict_all(model, data)?
        .into_iter()
        .map(|p| scaler.unscale(p, 0))
        .collect();
    let actual: Vec<f64> = data.targets.data().iter().map(|&y| scaler.unscale(y, 0)).collect();
    let mse = mse(&actual, &predicted)?;
    Ok(Evaluation {
        mse,
        rmse: mse.sqrt(),
        actual,
        predicted,
    })
}

/// Persistence forecast: each target predicted by the temperature `lag` steps
/// earlier, taken from inside its window. Normalized units.
pub fn lag_baseline(data: &WindowedDataset, lag: usize) -> Result<Vec<f64>> {
    if lag == 0 || lag > data.window {
        return Err(Error::Parameter(format!(
            "lag must lie in 1..={}, got {lag}",
            data.window
        )));
    }
    let f = data.features();
    Ok((0..data.len())
        .map(|i| data.inputs.row(i)[(data.window - lag) * f])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::preprocessing::{fit_scaler, make_windows, transform};
    use crate::tensor::Tensor;

    fn tiny_model() -> Model {
        Model::from_config(ModelConfig {
            window: 8,
            conv_filters: vec![4, 3],
            lstm_units: 4,
            lstm_stack_depth: 2,
            bilstm_units: 4,
            dense_units: 6,
            ..ModelConfig::tiny()
        })
        .unwrap()
    }

    fn linear_dataset(len: usize, window: usize) -> (WindowedDataset, ScalerParams) {
        let raw = Tensor::new(vec![len, 1], (0..len).map(|t| t as f64).collect()).unwrap();
        let scaler = fit_scaler(&raw).unwrap();
        let ds = make_windows(&transform(&raw, &scaler).unwrap(), window).unwrap();
        (ds, scaler)
    }

    #[test]
    fn single_epoch_bound() {
        let (ds, _) = linear_dataset(20, 8);
        let cfg = TrainConfig {
            max_epochs: 1,
            patience: 1,
            ..Default::default()
        };
        let (_, log) = train(tiny_model(), &ds, None, &cfg).unwrap();
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.stop_reason, StopReason::MaxEpochs);
        assert_eq!(log.monitor, Monitor::TrainLoss);
    }

    #[test]
    fn linear_series_beats_mean_predictor() {
        let (ds, _) = linear_dataset(60, 8);
        let cfg = TrainConfig {
            max_epochs: 50,
            patience: 50,
            batch_size: 8,
            schedule: LrSchedule::new(0.01, 0.0).unwrap(),
            ..Default::default()
        };
        let (model, log) = train(tiny_model(), &ds, None, &cfg).unwrap();
        let y = ds.targets.data();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let baseline = mse(y, &vec![mean; y.len()]).unwrap();
        assert!(dataset_mse(&model, &ds).unwrap() < baseline);
        let best = log.best_record().unwrap().train_mse;
        assert!(log.records[0].train_mse > best);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let (ds, _) = linear_dataset(30, 8);
        let cfg = TrainConfig {
            max_epochs: 3,
            batch_size: 5,
            ..Default::default()
        };
        let (m1, l1) = train(tiny_model(), &ds, Some(&ds), &cfg).unwrap();
        let (m2, l2) = train(tiny_model(), &ds, Some(&ds), &cfg).unwrap();
        assert_eq!(l1, l2);
        for (a, b) in m1.tensors().iter().zip(m2.tensors()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn val_monitor_requires_validation() {
        let (ds, _) = linear_dataset(20, 8);
        let cfg = TrainConfig {
            monitor: Some(Monitor::ValLoss),
            ..Default::default()
        };
        assert!(matches!(train(tiny_model(), &ds, None, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn divergence_names_epoch_and_batch() {
        let (ds, _) = linear_dataset(20, 8);
        let cfg = TrainConfig {
            max_epochs: 2,
            schedule: LrSchedule::new(1e300, 0.0).unwrap(),
            ..Default::default()
        };
        match train(tiny_model(), &ds, None, &cfg) {
            Err(Error::Divergence { epoch, batch, .. }) => assert!(epoch >= 1 && batch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn evaluation_identities() {
        let (ds, scaler) = linear_dataset(30, 8);
        let model = tiny_model();
        let eval = evaluate(&model, &ds, &scaler).unwrap();
        assert_eq!(eval.actual.len(), ds.len());
        let norm = dataset_mse(&model, &ds).unwrap();
        let factor = scaler.half_range(0).powi(2);
        assert!((norm * factor - eval.mse).abs() < 1e-9 * eval.mse.max(1.0));
        assert!((eval.rmse * eval.rmse - eval.mse).abs() < 1e-12 * eval.mse.max(1.0));

        let bad = ScalerParams {
            min: vec![0.0, 0.0],
            max: vec![1.0, 1.0],
        };
        assert!(matches!(evaluate(&model, &ds, &bad), Err(Error::Consistency(_))));
    }

    #[test]
    fn lag_baseline_reads_inside_window() {
        let (ds, _) = linear_dataset(12, 4);
        let pred = lag_baseline(&ds, 1).unwrap();
        assert_eq!(pred[0], ds.inputs.row(0)[3]);
        assert!(lag_baseline(&ds, 5).is_err());
    }
}
