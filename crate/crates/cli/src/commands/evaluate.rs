use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use cnnlstm::model::load;
use cnnlstm::preprocessing::{make_windows, split_point, transform};
use cnnlstm::training::evaluate;
use cnnlstm::{Error, Tensor};

use crate::data::{check_ratio, DataArgs};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Training fraction used when the checkpoint was fitted; rows after it are scored.
    #[arg(long, default_value_t = 0.8, conflicts_with = "all")]
    pub split: f64,
    /// Score every window of the file instead of the test split.
    #[arg(long)]
    pub all: bool,
    /// Write `date,actual,predicted` rows here.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

pub fn run(args: EvaluateArgs) -> Result<bool> {
    check_ratio("split", args.split, false)?;
    let bundle = load(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let loaded = args.data.load()?;
    let features = bundle.model.config.features;
    if loaded.series.cols() != features {
        return Err(Error::Consistency(format!(
            "checkpoint expects {features} features but the data selection gives {} ({})",
            loaded.series.cols(),
            loaded.columns.join(",")
        ))
        .into());
    }
    let start = if args.all {
        0
    } else {
        split_point(loaded.series.rows(), args.split)?
    };
    let rows = Tensor::new(
        vec![loaded.series.rows() - start, features],
        loaded.series.data()[start * features..].to_vec(),
    )?;
    let window = bundle.model.config.window;
    let set = make_windows(&transform(&rows, &bundle.scaler)?, window)?;
    let eval = evaluate(&bundle.model, &set, &bundle.scaler)?;

    if let Some(path) = &args.out_csv {
        let mut w = csv::Writer::from_path(path)
            .with_context(|| format!("creating {}", path.display()))?;
        w.write_record(["date", "actual", "predicted"])?;
        for (i, (a, p)) in eval.actual.iter().zip(&eval.predicted).enumerate() {
            let date = loaded.dates[start + window + i].format("%Y-%m-%d").to_string();
            w.write_record([date, a.to_string(), p.to_string()])?;
        }
        w.flush()?;
    }
    println!("windows={} mse={:.6} rmse={:.6}", set.len(), eval.mse, eval.rmse);
    Ok(true)
}
