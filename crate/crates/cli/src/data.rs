//! Flags and loading shared by every command that reads a CSV.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use cnnlstm::ingestion::{read_csv, to_series, CsvSchema, DateFormat, FeatureSelection, OrderPolicy, Series};
use cnnlstm::preprocessing::{drop_missing_rows, impute_mean};
use cnnlstm::Tensor;
use serde::Serialize;

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    /// Replace missing cells with their column mean.
    Mean,
    /// Drop rows with any missing cell.
    Drop,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Daily climate CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "date")]
    pub date_column: String,
    #[arg(long = "temp-column", default_value = "meantemp")]
    pub temperature_column: String,
    /// Extra numeric columns to read (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub extras: Vec<String>,
    /// `iso`, `dmy`, or a chrono format string such as `%Y%m%d-%H:%M`.
    #[arg(long, default_value = "iso")]
    pub date_format: String,
    /// Sort rows and drop repeated dates instead of failing.
    #[arg(long)]
    pub repair_order: bool,
    /// Average sub-daily rows into daily records.
    #[arg(long)]
    pub resample_daily: bool,
    #[arg(long, default_value_t = -40.0, allow_hyphen_values = true)]
    pub min_temp: f64,
    #[arg(long, default_value_t = 60.0)]
    pub max_temp: f64,
    /// Feed the extra columns to the model.
    #[arg(long)]
    pub use_extras: bool,
    /// Feed month and season to the model.
    #[arg(long)]
    pub calendar: bool,
    #[arg(long, value_enum, default_value_t = MissingPolicy::Mean)]
    pub missing: MissingPolicy,
}

/// Rejects ratios outside the open unit interval before any work starts.
pub fn check_ratio(flag: &str, value: f64, allow_zero: bool) -> Result<()> {
    let ok = (value > 0.0 || (allow_zero && value == 0.0)) && value < 1.0;
    if ok {
        Ok(())
    } else {
        Err(UsageError(format!("--{flag} must lie in (0, 1), got {value}")).into())
    }
}

pub struct Loaded {
    pub series: Tensor,
    pub dates: Vec<chrono::NaiveDate>,
    pub columns: Vec<String>,
}

impl DataArgs {
    pub fn schema(&self) -> CsvSchema {
        let date_format = match self.date_format.as_str() {
            "iso" => DateFormat::Iso,
            "dmy" => DateFormat::Dmy,
            other => DateFormat::Custom(other.to_string()),
        };
        CsvSchema {
            date_column: self.date_column.clone(),
            temperature_column: self.temperature_column.clone(),
            extras: self.extras.clone(),
            date_format,
            order_policy: if self.repair_order {
                OrderPolicy::Repair
            } else {
                OrderPolicy::Reject
            },
            temperature_band: (self.min_temp, self.max_temp),
            resample_daily: self.resample_daily,
        }
    }

    pub fn selection(&self) -> FeatureSelection {
        FeatureSelection {
            extras: self.use_extras,
            calendar: self.calendar,
        }
    }

    /// Reads, converts and cleans the CSV into a dense `L x F` series.
    pub fn load(&self) -> Result<Loaded> {
        if self.use_extras && self.extras.is_empty() {
            return Err(UsageError("--use-extras needs --extras".into()).into());
        }
        let schema = self.schema();
        let ingested = read_csv(&self.data, &schema)
            .with_context(|| format!("reading {}", self.data.display()))?;
        let Series {
            values,
            missing,
            dates,
            columns,
        } = to_series(&ingested.records, &schema, &self.selection())?;
        let (series, dates) = match self.missing {
            MissingPolicy::Mean => (impute_mean(&values, &missing)?, dates),
            MissingPolicy::Drop => {
                let (kept, idx) = drop_missing_rows(&values, &missing)?;
                (kept, idx.into_iter().map(|i| dates[i]).collect())
            }
        };
        Ok(Loaded {
            series,
            dates,
            columns,
        })
    }
}
