//! Daily climate CSV ingestion.
//!
//! Empty cells (and `NA`/`NaN` markers) become missing values; they are carried
//! as a mask into preprocessing rather than being dropped here. Rows are only
//! rejected for an out-of-band temperature, and each rejection is logged.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocessing::season_of;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DateFormat {
    /// `YYYY-MM-DD`, optionally followed by a time of day.
    Iso,
    /// `DD/MM/YYYY`
    Dmy,
    /// Any chrono format string; may include a time component.
    Custom(String),
}

impl DateFormat {
    fn patterns(&self) -> Vec<&str> {
        match self {
            DateFormat::Iso => vec![
                "%Y-%m-%d",
                "%Y-%m-%d %H:%M:%S",
                "%Y-%m-%dT%H:%M:%S",
                "%Y-%m-%d %H:%M",
            ],
            DateFormat::Dmy => vec!["%d/%m/%Y", "%d/%m/%Y %H:%M:%S", "%d/%m/%Y %H:%M"],
            DateFormat::Custom(f) => vec![f.as_str()],
        }
    }

    pub fn parse(&self, cell: &str) -> Option<NaiveDate> {
        self.patterns().into_iter().find_map(|p| {
            NaiveDate::parse_from_str(cell, p)
                .ok()
                .or_else(|| NaiveDateTime::parse_from_str(cell, p).ok().map(|dt| dt.date()))
        })
    }
}

/// What to do with repeated or out-of-order dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderPolicy {
    Reject,
    /// Sort by date and keep the first row of each duplicated date.
    Repair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub date_column: String,
    pub temperature_column: String,
    pub extras: Vec<String>,
    pub date_format: DateFormat,
    pub order_policy: OrderPolicy,
    /// Temperatures outside this band (°C) reject the row.
    pub temperature_band: (f64, f64),
    /// Average sub-daily (e.g. hourly) rows into one record per calendar day.
    pub resample_daily: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            date_column: "date".into(),
            temperature_column: "meantemp".into(),
            extras: Vec::new(),
            date_format: DateFormat::Iso,
            order_policy: OrderPolicy::Reject,
            temperature_band: (-40.0, 60.0),
            resample_daily: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClimateRecord {
    pub date: NaiveDate,
    /// `None` when the cell was empty.
    pub temperature: Option<f64>,
    /// Values of the schema's extra columns, in schema order.
    pub extras: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub records: Vec<ClimateRecord>,
    /// Data rows in the file (header excluded).
    pub rows_read: usize,
    pub rejected: Vec<Rejection>,
    /// Number of missing calendar days between consecutive records.
    pub gap_days: usize,
}

fn parse_value(cell: &str, path: &Path, line: usize, column: &str) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() || matches!(cell, "NA" | "N/A" | "nan" | "NaN" | "null") {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::Ingestion {
            path: path.to_path_buf(),
            line,
            column: column.to_string(),
            message: format!("cannot parse `{cell}` as a number"),
        }),
    }
}

fn column_index(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Ingestion {
            path: path.to_path_buf(),
            line: 1,
            column: name.to_string(),
            message: "column not found in header".into(),
        })
}

fn mean_of(values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

pub fn read_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Ingested> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let date_idx = column_index(&headers, &schema.date_column, path)?;
    let temp_idx = column_index(&headers, &schema.temperature_column, path)?;
    let extra_idx = schema
        .extras
        .iter()
        .map(|c| column_index(&headers, c, path))
        .collect::<Result<Vec<_>>>()?;

    let mut parsed: Vec<(usize, ClimateRecord)> = Vec::new();
    let mut rejected = Vec::new();
    let mut rows_read = 0;
    for row in reader.records() {
        let row = row?;
        rows_read += 1;
        let line = row.position().map_or(rows_read + 1, |p| p.line() as usize);
        let date_cell = row.get(date_idx).unwrap_or("").trim();
        let date = schema.date_format.parse(date_cell).ok_or_else(|| Error::Ingestion {
            path: path.to_path_buf(),
            line,
            column: schema.date_column.clone(),
            message: format!("cannot parse date `{date_cell}` as {:?}", schema.date_format),
        })?;
        let temperature = parse_value(
            row.get(temp_idx).unwrap_or(""),
            path,
            line,
            &schema.temperature_column,
        )?;
        let extras = extra_idx
            .iter()
            .zip(&schema.extras)
            .map(|(&i, name)| parse_value(row.get(i).unwrap_or(""), path, line, name))
            .collect::<Result<Vec<_>>>()?;
        if let Some(t) = temperature {
            let (lo, hi) = schema.temperature_band;
            if t < lo || t > hi {
                let reason = format!("temperature {t} outside [{lo}, {hi}]");
                warn!("{}:{line}: rejected row: {reason}", path.display());
                rejected.push(Rejection { line, reason });
                continue;
            }
        }
        parsed.push((
            line,
            ClimateRecord {
                date,
                temperature,
                extras,
            },
        ));
    }

    let mut records = if schema.resample_daily {
        resample(parsed)
    } else {
        order(parsed, schema.order_policy, path, &mut rejected)?
    };
    records.shrink_to_fit();

    let gap_days = records
        .windows(2)
        .map(|w| (w[1].date - w[0].date).num_days() as usize - 1)
        .sum();
    if gap_days > 0 {
        warn!("{}: {gap_days} calendar days missing between records", path.display());
    }
    info!(
        "{}: {rows_read} rows read, {} records, {} rejected",
        path.display(),
        records.len(),
        rejected.len()
    );
    Ok(Ingested {
        records,
        rows_read,
        rejected,
        gap_days,
    })
}

fn order(
    mut parsed: Vec<(usize, ClimateRecord)>,
    policy: OrderPolicy,
    path: &Path,
    rejected: &mut Vec<Rejection>,
) -> Result<Vec<ClimateRecord>> {
    match policy {
        OrderPolicy::Reject => {
            for w in parsed.windows(2) {
                let (prev, (line, cur)) = (&w[0].1, &w[1]);
                if cur.date <= prev.date {
                    let what = if cur.date == prev.date { "duplicate" } else { "out-of-order" };
                    return Err(Error::Ingestion {
                        path: path.to_path_buf(),
                        line: *line,
                        column: "date".into(),
                        message: format!("{what} date {}", cur.date),
                    });
                }
            }
        }
        OrderPolicy::Repair => {
            parsed.sort_by_key(|(line, r)| (r.date, *line));
            let mut kept: Vec<(usize, ClimateRecord)> = Vec::with_capacity(parsed.len());
            for (line, r) in parsed {
                if kept.last().is_some_and(|(_, k)| k.date == r.date) {
                    let reason = format!("duplicate date {}", r.date);
                    warn!("{}:{line}: rejected row: {reason}", path.display());
                    rejected.push(Rejection { line, reason });
                } else {
                    kept.push((line, r));
                }
            }
            parsed = kept;
        }
    }
    Ok(parsed.into_iter().map(|(_, r)| r).collect())
}

/// Daily means of every field; a day's field is missing only if all its rows are.
fn resample(parsed: Vec<(usize, ClimateRecord)>) -> Vec<ClimateRecord> {
    let mut days: BTreeMap<NaiveDate, Vec<ClimateRecord>> = BTreeMap::new();
    for (_, r) in parsed {
        days.entry(r.date).or_default().push(r);
    }
    days.into_iter()
        .map(|(date, rows)| {
            let n_extra = rows[0].extras.len();
            ClimateRecord {
                date,
                temperature: mean_of(&rows.iter().map(|r| r.temperature).collect::<Vec<_>>()),
                extras: (0..n_extra)
                    .map(|k| mean_of(&rows.iter().map(|r| r.extras[k]).collect::<Vec<_>>()))
                    .collect(),
            }
        })
        .collect()
}

/// Writes records back with the schema's column names, ISO dates and
/// shortest round-trip float formatting.
pub fn write_csv(records: &[ClimateRecord], schema: &CsvSchema, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![schema.date_column.clone(), schema.temperature_column.clone()];
    header.extend(schema.extras.iter().cloned());
    w.write_record(&header)?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        let mut row = vec![r.date.format("%Y-%m-%d").to_string(), cell(r.temperature)];
        row.extend(r.extras.iter().map(|&v| cell(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Which columns become model features. Temperature is always column 0.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSelection {
    /// Include the schema's extra columns after temperature.
    pub extras: bool,
    /// Append month and season.
    pub calendar: bool,
}

/// Dense feature matrix with its missing-value mask and dates.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    /// `L x F`; missing entries hold 0 and are flagged in `missing`.
    pub values: Tensor,
    /// Row-major, same length as `values`.
    pub missing: Vec<bool>,
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<String>,
}

pub fn to_series(records: &[ClimateRecord], schema: &CsvSchema, selection: &FeatureSelection) -> Result<Series> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no records to convert".into()));
    }
    let mut columns = vec![schema.temperature_column.clone()];
    if selection.extras {
        columns.extend(schema.extras.iter().cloned());
    }
    if selection.calendar {
        columns.push("month".into());
        columns.push("season".into());
    }
    let mut values = Vec::with_capacity(records.len() * columns.len());
    let mut missing = Vec::with_capacity(values.capacity());
    for r in records {
        let mut push = |v: Option<f64>| {
            values.push(v.unwrap_or(0.0));
            missing.push(v.is_none());
        };
        push(r.temperature);
        if selection.extras {
            r.extras.iter().for_each(|&v| push(v));
        }
        if selection.calendar {
            push(Some(r.date.month() as f64));
            push(Some(season_of(r.date.month()) as f64));
        }
    }
    Ok(Series {
        values: Tensor::new(vec![records.len(), columns.len()], values)?,
        missing,
        dates: records.iter().map(|r| r.date).collect(),
        columns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn well_formed_file() {
        let f = file("date,meantemp,humidity\n2017-01-01,10.5,80\n2017-01-02,11,\n2017-01-03,,70.25\n");
        let schema = CsvSchema {
            extras: vec!["humidity".into()],
            ..Default::default()
        };
        let got = read_csv(f.path(), &schema).unwrap();
        assert_eq!(got.rows_read, 3);
        assert_eq!(got.records.len(), 3);
        assert_eq!(got.records[0].temperature, Some(10.5));
        assert_eq!(got.records[1].extras, vec![None]);
        assert_eq!(got.records[2].temperature, None);
        assert!(got.records.windows(2).all(|w| w[0].date < w[1].date));
    }

    #[test]
    fn bad_cells_name_line_and_column() {
        let f = file("date,meantemp\n2017-01-01,10\n2017-01-02,warm\n");
        match read_csv(f.path(), &CsvSchema::default()) {
            Err(Error::Ingestion { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "meantemp");
            }
            other => panic!("{other:?}"),
        }
        let f = file("date,meantemp\nyesterday,10\n");
        assert!(matches!(
            read_csv(f.path(), &CsvSchema::default()),
            Err(Error::Ingestion { line: 2, .. })
        ));
    }

    #[test]
    fn duplicates_rejected_or_repaired() {
        let f = file("date,meantemp\n2017-01-02,10\n2017-01-01,9\n2017-01-01,8\n");
        assert!(read_csv(f.path(), &CsvSchema::default()).is_err());
        let schema = CsvSchema {
            order_policy: OrderPolicy::Repair,
            ..Default::default()
        };
        let got = read_csv(f.path(), &schema).unwrap();
        assert_eq!(got.records.len(), 2);
        assert_eq!(got.records[0].temperature, Some(9.0));
        assert_eq!(got.rejected.len(), 1);
    }

    #[test]
    fn dmy_dates_gaps_and_band() {
        let f = file("day,t\n01/03/2000,20\n04/03/2000,99\n05/03/2000,21\n");
        let schema = CsvSchema {
            date_column: "day".into(),
            temperature_column: "t".into(),
            date_format: DateFormat::Dmy,
            ..Default::default()
        };
        let got = read_csv(f.path(), &schema).unwrap();
        assert_eq!(got.records.len(), 2);
        assert_eq!(got.rejected.len(), 1);
        assert_eq!(got.rows_read, 3);
        assert_eq!(got.gap_days, 3);
    }

    #[test]
    fn hourly_rows_resample_to_daily_means() {
        let f = file("datetime_utc,_tempm\n19961101-11:00,30\n19961101-12:00,\n19961101-13:00,28\n19961102-00:00,20\n");
        let schema = CsvSchema {
            date_column: "datetime_utc".into(),
            temperature_column: "_tempm".into(),
            date_format: DateFormat::Custom("%Y%m%d-%H:%M".into()),
            resample_daily: true,
            ..Default::default()
        };
        let got = read_csv(f.path(), &schema).unwrap();
        assert_eq!(got.records.len(), 2);
        assert_eq!(got.records[0].temperature, Some(29.0));
        assert_eq!(got.records[1].temperature, Some(20.0));
    }

    #[test]
    fn write_back_round_trips_full_precision() {
        let f = file("date,meantemp,wind\n2001-05-01,31.123456789012345,0.1\n2001-05-02,-0.30000000000000004,\n");
        let schema = CsvSchema {
            extras: vec!["wind".into()],
            ..Default::default()
        };
        let first = read_csv(f.path(), &schema).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_csv(&first.records, &schema, out.path()).unwrap();
        let second = read_csv(out.path(), &schema).unwrap();
        assert_eq!(first.records, second.records);
    }

    #[test]
    fn series_columns() {
        let f = file("date,meantemp,humidity\n2017-01-15,10,50\n2017-07-01,,60\n");
        let schema = CsvSchema {
            extras: vec!["humidity".into()],
            ..Default::default()
        };
        let recs = read_csv(f.path(), &schema).unwrap().records;
        let s = to_series(&recs, &schema, &FeatureSelection::default()).unwrap();
        assert_eq!(s.values.shape(), &[2, 1]);
        assert_eq!(s.missing, vec![false, true]);
        let cal = FeatureSelection {
            extras: false,
            calendar: true,
        };
        let s = to_series(&recs, &schema, &cal).unwrap();
        assert_eq!(s.values.shape(), &[2, 3]);
        assert_eq!(s.columns, vec!["meantemp", "month", "season"]);
        assert_eq!(s.values.row(1), &[0.0, 7.0, 2.0]);
        assert_eq!(to_series(&recs, &schema, &cal).unwrap(), s);
        assert!(to_series(&[], &schema, &cal).is_err());
    }
}
