use std::fs::{self, File};
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use cnnlstm::model::save;
use cnnlstm::optimizer::LrSchedule;
use cnnlstm::pipeline::prepare;
use cnnlstm::training::{evaluate, train_with_callback, Monitor, TrainConfig};
use cnnlstm::{Model, ModelConfig, Rng};
use serde::Serialize;

use crate::data::{check_ratio, DataArgs};
use crate::manifest::{sha256_file, RunManifest};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MonitorArg {
    Train,
    Val,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for model.ckpt, train_log.txt and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub window: usize,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 7)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.0)]
    pub min_delta: f64,
    /// Loss that drives early stopping; defaults to validation loss when a
    /// validation split exists.
    #[arg(long, value_enum)]
    pub monitor: Option<MonitorArg>,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Per-epoch decay: lr = lr0 / (1 + decay * epoch).
    #[arg(long, default_value_t = 0.0)]
    pub decay: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Fraction of rows used for training (the rest is the test split).
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    /// Fraction of the training rows held out for validation; 0 disables.
    #[arg(long, default_value_t = 0.1)]
    pub val_ratio: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [256, 128])]
    pub filters: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub kernel: usize,
    #[arg(long, default_value_t = 100)]
    pub lstm_units: usize,
    #[arg(long, default_value_t = 4)]
    pub lstm_depth: usize,
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f64,
    #[arg(long, default_value_t = 128)]
    pub bilstm_units: usize,
    #[arg(long, default_value_t = 100)]
    pub dense_units: usize,
    /// Also append epoch lines to this file.
    #[arg(long)]
    pub log_file: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ResolvedConfig<'a> {
    data: &'a DataArgs,
    split: f64,
    val_ratio: f64,
    model: &'a ModelConfig,
    training: &'a TrainConfig,
}

pub fn run(args: TrainArgs) -> Result<bool> {
    let model_config = ModelConfig {
        window: args.window,
        features: 1,
        conv_filters: args.filters.clone(),
        kernel: args.kernel,
        lstm_units: args.lstm_units,
        lstm_stack_depth: args.lstm_depth,
        dropout_rate: args.dropout,
        bilstm_units: args.bilstm_units,
        dense_units: args.dense_units,
        output_units: 1,
        seed: args.seed,
    };
    let train_config = TrainConfig {
        max_epochs: args.epochs,
        patience: args.patience,
        batch_size: args.batch,
        monitor: args.monitor.map(|m| match m {
            MonitorArg::Train => Monitor::TrainLoss,
            MonitorArg::Val => Monitor::ValLoss,
        }),
        min_delta: args.min_delta,
        schedule: LrSchedule::new(args.lr, args.decay)?,
        seed: args.seed,
        ..TrainConfig::default()
    };
    train_config.validate()?;
    check_ratio("split", args.split, false)?;
    check_ratio("val-ratio", args.val_ratio, true)?;

    let loaded = args.data.load()?;
    let model_config = ModelConfig {
        features: loaded.series.cols(),
        ..model_config
    };
    model_config.validate()?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let checkpoint = args.out.join("model.ckpt");
    let log_path = args.out.join("train_log.txt");
    let manifest_path = args.out.join("manifest.json");
    RunManifest {
        command: "train",
        tool_version: env!("CARGO_PKG_VERSION"),
        checkpoint_format: cnnlstm::model::FORMAT_VERSION,
        seed: args.seed,
        input: args.data.data.clone(),
        input_sha256: sha256_file(&args.data.data)?,
        config: ResolvedConfig {
            data: &args.data,
            split: args.split,
            val_ratio: args.val_ratio,
            model: &model_config,
            training: &train_config,
        },
        artifacts: vec![checkpoint.clone(), log_path.clone(), manifest_path.clone()],
    }
    .write(&manifest_path)?;

    let prepared = prepare(&loaded.series, args.split, args.val_ratio, args.window)?;
    let model = Model::build(model_config, &mut Rng::new(args.seed))?;
    log::info!(
        "training {} parameters on {} windows",
        model.total_params(),
        prepared.train.len()
    );

    let mut log_file = args.log_file.as_ref().map(File::create).transpose()?;
    let mut stdout = std::io::stdout().lock();
    let (model, log) = train_with_callback(
        model,
        &prepared.train,
        prepared.validation.as_ref(),
        &train_config,
        |record| {
            let _ = writeln!(stdout, "{record}");
            if let Some(f) = log_file.as_mut() {
                let _ = writeln!(f, "{record}");
            }
        },
    )?;
    drop(stdout);

    save(&model, &prepared.scaler, &checkpoint)?;
    fs::write(&log_path, log.to_text())?;

    let mut splits = vec![("train", &prepared.train)];
    if let Some(v) = prepared.validation.as_ref() {
        splits.push(("val", v));
    }
    splits.push(("test", &prepared.test));
    for (name, set) in splits {
        if set.is_empty() {
            continue;
        }
        let e = evaluate(&model, set, &prepared.scaler)?;
        println!("split={name} mse={:.6} rmse={:.6}", e.mse, e.rmse);
    }
    println!("checkpoint={}", checkpoint.display());
    Ok(true)
}
