use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use cnnlstm::model::load;
use cnnlstm::preprocessing::{calendar_features, transform};
use cnnlstm::{Error, Tensor};

use crate::data::DataArgs;
use crate::UsageError;

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Days to forecast; later days feed earlier forecasts back as input.
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
}

pub fn run(args: PredictArgs) -> Result<bool> {
    if args.steps == 0 {
        return Err(UsageError("--steps must be at least 1".into()).into());
    }
    if args.steps > 1 && args.data.use_extras {
        return Err(UsageError("multi-step forecasts cannot extrapolate extra columns".into()).into());
    }
    let bundle = load(&args.checkpoint)
        .with_context(|| format!("loading {}", args.checkpoint.display()))?;
    let loaded = args.data.load()?;
    let (window, features) = (bundle.model.config.window, bundle.model.config.features);
    if loaded.series.cols() != features {
        return Err(Error::Consistency(format!(
            "checkpoint expects {features} features but the data selection gives {}",
            loaded.series.cols()
        ))
        .into());
    }
    let rows = loaded.series.rows();
    if rows < window {
        return Err(Error::InsufficientData(format!(
            "prediction needs the last {window} days, the file has {rows}"
        ))
        .into());
    }
    let tail = Tensor::new(
        vec![window, features],
        loaded.series.data()[(rows - window) * features..].to_vec(),
    )?;
    let mut history = transform(&tail, &bundle.scaler)?.into_data();
    let mut date = *loaded.dates.last().expect("non-empty series");

    println!("date,predicted");
    for _ in 0..args.steps {
        let input = Tensor::new(vec![window, features], history[history.len() - window * features..].to_vec())?;
        let next = bundle.model.predict(&input)?;
        date = date.succ_opt().context("date overflow")?;
        println!("{},{}", date.format("%Y-%m-%d"), bundle.scaler.unscale(next, 0));

        let mut row = vec![next];
        if args.data.calendar {
            let cal = calendar_features(&[date])?;
            let offset = features - 2;
            row.extend(
                cal.data()
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| bundle.scaler.scale(v, offset + j)),
            );
        }
        history.extend(row);
    }
    Ok(true)
}
