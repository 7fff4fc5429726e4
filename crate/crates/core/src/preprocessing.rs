//! Min-max scaling onto `[-1, 1]`, mean imputation, calendar features and
//! sliding-window supervision.
//!
//! The scaler is always fitted on the training split only. Test values outside
//! the fitted range map outside `[-1, 1]` and are deliberately not clamped, so
//! the transform stays invertible.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-feature range recorded at fit time, in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerParams {
    pub fn features(&self) -> usize {
        self.min.len()
    }

    pub fn scale(&self, value: f64, column: usize) -> f64 {
        let (lo, hi) = (self.min[column], self.max[column]);
        2.0 * (value - lo) / (hi - lo) - 1.0
    }

    pub fn unscale(&self, value: f64, column: usize) -> f64 {
        let (lo, hi) = (self.min[column], self.max[column]);
        (value + 1.0) * (hi - lo) / 2.0 + lo
    }

    /// Half-width of the original range; the factor between normalized and original errors.
    pub fn half_range(&self, column: usize) -> f64 {
        (self.max[column] - self.min[column]) / 2.0
    }

    fn check_columns(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() < 2 || *x.shape().last().unwrap() != self.features() {
            return Err(Error::Dimension {
                op: "scaler",
                left: x.shape().to_vec(),
                right: vec![self.features()],
            });
        }
        Ok(())
    }
}

pub fn fit_scaler(series: &Tensor) -> Result<ScalerParams> {
    if series.shape().len() != 2 || series.rows() < 2 {
        return Err(Error::InsufficientData(format!(
            "scaler needs an L x F series with L >= 2, got {:?}",
            series.shape()
        )));
    }
    let f = series.cols();
    let mut min = vec![f64::INFINITY; f];
    let mut max = vec![f64::NEG_INFINITY; f];
    for i in 0..series.rows() {
        for (j, &v) in series.row(i).iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    for j in 0..f {
        if max[j] <= min[j] {
            return Err(Error::DegenerateFeature {
                column: j,
                value: min[j],
            });
        }
    }
    Ok(ScalerParams { min, max })
}

/// `x' = 2 (x - min) / (max - min) - 1`, column-wise over the last axis.
pub fn transform(x: &Tensor, p: &ScalerParams) -> Result<Tensor> {
    p.check_columns(x)?;
    map_columns(x, p.features(), |v, j| p.scale(v, j))
}

pub fn inverse_transform(x: &Tensor, p: &ScalerParams) -> Result<Tensor> {
    p.check_columns(x)?;
    map_columns(x, p.features(), |v, j| p.unscale(v, j))
}

fn map_columns(x: &Tensor, f: usize, op: impl Fn(f64, usize) -> f64) -> Result<Tensor> {
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| op(v, i % f))
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Replaces entries flagged in `missing` (row-major, same length as the series)
/// with the mean of the present entries of their column.
pub fn impute_mean(series: &Tensor, missing: &[bool]) -> Result<Tensor> {
    if missing.len() != series.len() {
        return Err(Error::Dimension {
            op: "impute_mean",
            left: series.shape().to_vec(),
            right: vec![missing.len()],
        });
    }
    let f = series.cols();
    let mut sums = vec![0.0; f];
    let mut counts = vec![0usize; f];
    for (i, (&v, &m)) in series.data().iter().zip(missing).enumerate() {
        if !m {
            sums[i % f] += v;
            counts[i % f] += 1;
        }
    }
    if let Some(column) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Imputation { column });
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let data = series
        .data()
        .iter()
        .zip(missing)
        .enumerate()
        .map(|(i, (&v, &m))| if m { means[i % f] } else { v })
        .collect();
    Tensor::new(series.shape().to_vec(), data)
}

/// Row-drop alternative to imputation: keeps only rows with no missing entry.
/// Returns the kept series and the indices of the kept rows.
pub fn drop_missing_rows(series: &Tensor, missing: &[bool]) -> Result<(Tensor, Vec<usize>)> {
    if missing.len() != series.len() {
        return Err(Error::Dimension {
            op: "drop_missing_rows",
            left: series.shape().to_vec(),
            right: vec![missing.len()],
        });
    }
    let f = series.cols();
    let keep: Vec<usize> = (0..series.rows())
        .filter(|&i| !missing[i * f..(i + 1) * f].iter().any(|&m| m))
        .collect();
    if keep.is_empty() {
        return Err(Error::InsufficientData("every row has a missing value".into()));
    }
    let data = keep.iter().flat_map(|&i| series.row(i).iter().copied()).collect();
    let mut shape = series.shape().to_vec();
    shape[0] = keep.len();
    Ok((Tensor::new(shape, data)?, keep))
}

/// Meteorological season: Dec-Feb 0, Mar-May 1, Jun-Aug 2, Sep-Nov 3.
pub fn season_of(month: u32) -> u32 {
    (month % 12) / 3
}

/// `[month (1-12), season (0-3)]` per date.
pub fn calendar_features(dates: &[NaiveDate]) -> Result<Tensor> {
    if dates.is_empty() {
        return Err(Error::InsufficientData("no dates".into()));
    }
    let data = dates
        .iter()
        .flat_map(|d| [d.month() as f64, season_of(d.month()) as f64])
        .collect();
    Tensor::new(vec![dates.len(), 2], data)
}

/// Paired `(window, next value)` samples. Inputs are `N x W x F`; targets are `N x 1`
/// and always come from feature 0 (temperature).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub inputs: Tensor,
    pub targets: Tensor,
    pub window: usize,
    pub horizon: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> usize {
        self.inputs.shape()[2]
    }

    /// Window `i` as a `W x F` tensor.
    pub fn window(&self, i: usize) -> Tensor {
        Tensor::from_parts(
            vec![self.window, self.features()],
            self.inputs.row(i).to_vec(),
        )
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets.data()[i]
    }
}

pub fn make_windows(series: &Tensor, window: usize) -> Result<WindowedDataset> {
    if series.shape().len() != 2 {
        return Err(Error::Shape(format!(
            "windowing needs an L x F series, got {:?}",
            series.shape()
        )));
    }
    let (len, f) = (series.rows(), series.cols());
    if window == 0 || len <= window {
        return Err(Error::InsufficientData(format!(
            "series of length {len} cannot form windows of length {window}"
        )));
    }
    let n = len - window;
    let mut inputs = Vec::with_capacity(n * window * f);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        inputs.extend_from_slice(&series.data()[i * f..(i + window) * f]);
        targets.push(series.at(i + window, 0));
    }
    Ok(WindowedDataset {
        inputs: Tensor::new(vec![n, window, f], inputs)?,
        targets: Tensor::new(vec![n, 1], targets)?,
        window,
        horizon: 1,
    })
}

/// Number of leading rows assigned to the first split: `floor(ratio * len)`.
pub fn split_point(len: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Split(format!("ratio must lie in (0, 1), got {ratio}")));
    }
    let cut = (ratio * len as f64).floor() as usize;
    if cut == 0 || cut >= len {
        return Err(Error::Split(format!(
            "ratio {ratio} on {len} rows leaves an empty side"
        )));
    }
    Ok(cut)
}

/// First `floor(ratio * L)` rows to train, the rest to test, order preserved.
pub fn chronological_split(series: &Tensor, ratio: f64) -> Result<(Tensor, Tensor)> {
    let cut = split_point(series.rows(), ratio)?;
    let f = series.cols();
    let mut head = series.shape().to_vec();
    let mut tail = head.clone();
    head[0] = cut;
    tail[0] = series.rows() - cut;
    let (a, b) = series.data().split_at(cut * f);
    Ok((Tensor::new(head, a.to_vec())?, Tensor::new(tail, b.to_vec())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{uniform_init, Rng};
    use proptest::prelude::*;

    fn column(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap()
    }

    #[test]
    fn fit_and_transform_bounds() {
        let p = fit_scaler(&column(&[10.0, 40.0, 25.0])).unwrap();
        assert_eq!((p.min[0], p.max[0]), (10.0, 40.0));
        let t = transform(&column(&[10.0, 40.0, 25.0]), &p).unwrap();
        assert_eq!(t.data(), &[-1.0, 1.0, 0.0]);
        let back = inverse_transform(&column(&[-1.0, 0.0]), &p).unwrap();
        assert_eq!(back.data(), &[10.0, 25.0]);
    }

    #[test]
    fn constant_column_is_rejected() {
        let err = fit_scaler(&column(&[5.0, 5.0, 5.0])).unwrap_err();
        assert!(matches!(err, Error::DegenerateFeature { column: 0, .. }));
    }

    #[test]
    fn out_of_range_values_are_not_clamped() {
        let p = fit_scaler(&column(&[10.0, 40.0])).unwrap();
        let t = transform(&column(&[55.0, -5.0]), &p).unwrap();
        assert_eq!(t.data(), &[2.0, -2.0]);
    }

    #[test]
    fn scaler_rejects_feature_mismatch() {
        let p = fit_scaler(&column(&[1.0, 2.0])).unwrap();
        let two = Tensor::zeros(&[3, 2]);
        assert!(transform(&two, &p).is_err());
    }

    #[test]
    fn imputation_cases() {
        let s = column(&[1.0, 0.0, 3.0]);
        let out = impute_mean(&s, &[false, true, false]).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0]);
        assert_eq!(impute_mean(&s, &[false; 3]).unwrap(), s);
        let out = impute_mean(&column(&[0.0, 0.0, 5.0]), &[true, true, false]).unwrap();
        assert_eq!(out.data(), &[5.0, 5.0, 5.0]);
        assert!(matches!(
            impute_mean(&s, &[true; 3]),
            Err(Error::Imputation { column: 0 })
        ));
    }

    #[test]
    fn row_drop_mode() {
        let s = Tensor::new(vec![3, 2], vec![1.0, 2.0, 0.0, 4.0, 5.0, 6.0]).unwrap();
        let (kept, idx) = drop_missing_rows(&s, &[false, false, true, false, false, false]).unwrap();
        assert_eq!(idx, vec![0, 2]);
        assert_eq!(kept.data(), &[1.0, 2.0, 5.0, 6.0]);
    }

    #[test]
    fn calendar_encoding() {
        let d = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).unwrap();
        let t = calendar_features(&[d(2017, 1, 15), d(2017, 7, 1), d(1996, 11, 30), d(2000, 12, 1)])
            .unwrap();
        assert_eq!(t.data(), &[1.0, 0.0, 7.0, 2.0, 11.0, 3.0, 12.0, 0.0]);
    }

    #[test]
    fn windows_enumerated() {
        let ds = make_windows(&column(&[1.0, 2.0, 3.0, 4.0]), 2).unwrap();
        assert_eq!(ds.inputs.data(), &[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(ds.targets.data(), &[3.0, 4.0]);
        assert_eq!(ds.horizon, 1);
        let long = column(&vec![0.5; 7300]);
        assert_eq!(make_windows(&long, 30).unwrap().len(), 7270);
        assert!(matches!(
            make_windows(&column(&vec![0.5; 30]), 30),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn windows_target_is_column_zero() {
        let s = Tensor::new(vec![3, 2], vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0]).unwrap();
        let ds = make_windows(&s, 2).unwrap();
        assert_eq!(ds.window(0).shape(), &[2, 2]);
        assert_eq!(ds.target(0), 3.0);
    }

    #[test]
    fn split_rules() {
        let s = column(&(0..10).map(f64::from).collect::<Vec<_>>());
        let (a, b) = chronological_split(&s, 0.8).unwrap();
        assert_eq!((a.rows(), b.rows()), (8, 2));
        let (a, b) = chronological_split(&s, 0.999).unwrap();
        assert_eq!((a.rows(), b.rows()), (9, 1));
        assert!(a.data().last().unwrap() < b.data().first().unwrap());
        assert!(chronological_split(&s, 0.05).is_err());
        assert!(chronological_split(&s, 1.0).is_err());
    }

    #[test]
    fn round_trip_thousand_values() {
        let mut rng = Rng::new(5);
        let x = uniform_init(&mut rng, &[1000, 1], 60.0).unwrap();
        let p = fit_scaler(&x).unwrap();
        let back = inverse_transform(&transform(&x, &p).unwrap(), &p).unwrap();
        let err = x
            .data()
            .iter()
            .zip(back.data())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-12, "{err}");
    }

    proptest! {
        #[test]
        fn fit_extremes_map_to_unit_bounds(v in prop::collection::vec(-50.0f64..50.0, 2..40)) {
            prop_assume!(v.iter().any(|&x| x != v[0]));
            let s = column(&v);
            let p = fit_scaler(&s).unwrap();
            let t = transform(&s, &p).unwrap();
            let lo = t.data().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(lo, -1.0);
            prop_assert_eq!(hi, 1.0);
        }

        #[test]
        fn window_count_and_contiguity(len in 2usize..60, w in 1usize..30) {
            prop_assume!(len > w);
            let s = column(&(0..len).map(|i| i as f64).collect::<Vec<_>>());
            let ds = make_windows(&s, w).unwrap();
            prop_assert_eq!(ds.len(), len - w);
            for i in 0..ds.len() {
                let win = ds.window(i);
                for (j, &v) in win.data().iter().enumerate() {
                    prop_assert_eq!(v, (i + j) as f64);
                }
                prop_assert_eq!(ds.target(i), (i + w) as f64);
            }
        }

        #[test]
        fn imputation_preserves_present_values(
            v in prop::collection::vec(-10.0f64..10.0, 1..30),
            mask_bits in prop::collection::vec(any::<bool>(), 30),
        ) {
            let mut mask: Vec<bool> = mask_bits[..v.len()].to_vec();
            mask[0] = false;
            let out = impute_mean(&column(&v), &mask).unwrap();
            let present: Vec<f64> = v.iter().zip(&mask).filter(|(_, &m)| !m).map(|(&x, _)| x).collect();
            let mean = present.iter().sum::<f64>() / present.len() as f64;
            for ((&a, &b), &m) in v.iter().zip(out.data()).zip(&mask) {
                if m { prop_assert_eq!(b, mean); } else { prop_assert_eq!(a.to_bits(), b.to_bits()); }
            }
        }
    }
}
