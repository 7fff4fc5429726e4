//! Split, scale and window a cleaned series in the order training expects:
//! chronological train/test split, optional validation tail carved from the
//! training part, scaler fitted on the training rows only.

use crate::error::Result;
use crate::preprocessing::{chronological_split, fit_scaler, make_windows, split_point, transform, ScalerParams, WindowedDataset};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub scaler: ScalerParams,
    pub train: WindowedDataset,
    pub validation: Option<WindowedDataset>,
    pub test: WindowedDataset,
    /// Row of the full series where the test split starts; the target of test
    /// window `i` is row `test_start + window + i`.
    pub test_start: usize,
}

/// `split_ratio` sends the leading rows to training; `val_ratio` (0 disables)
/// then moves the tail of the training rows to validation. A validation tail
/// too short to form one window is dropped, and a short test part yields an
/// empty test set; the training part must always form windows.
pub fn prepare(series: &Tensor, split_ratio: f64, val_ratio: f64, window: usize) -> Result<Prepared> {
    let test_start = split_point(series.rows(), split_ratio)?;
    let (train_rows, test_rows) = chronological_split(series, split_ratio)?;
    let (train_rows, val_rows) = if val_ratio > 0.0 {
        let (a, b) = chronological_split(&train_rows, 1.0 - val_ratio)?;
        if b.rows() > window {
            (a, Some(b))
        } else {
            log::warn!("validation part has {} rows, fewer than window + 1; disabled", b.rows());
            (train_rows, None)
        }
    } else {
        (train_rows, None)
    };
    let scaler = fit_scaler(&train_rows)?;
    let windows = |rows: &Tensor| make_windows(&transform(rows, &scaler)?, window);
    let test = if test_rows.rows() > window {
        windows(&test_rows)?
    } else {
        log::warn!("test part has {} rows, fewer than window + 1; no test windows", test_rows.rows());
        WindowedDataset {
            inputs: Tensor::zeros(&[0, window, series.cols()]),
            targets: Tensor::zeros(&[0, 1]),
            window,
            horizon: 1,
        }
    };
    Ok(Prepared {
        train: windows(&train_rows)?,
        validation: val_rows.as_ref().map(windows).transpose()?,
        test,
        test_start,
        scaler,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaler_sees_training_rows_only() {
        let series = Tensor::new(vec![100, 1], (0..100).map(f64::from).collect()).unwrap();
        let p = prepare(&series, 0.8, 0.25, 5).unwrap();
        assert_eq!(p.scaler.min, vec![0.0]);
        assert_eq!(p.scaler.max, vec![59.0]);
        assert_eq!(p.train.len(), 55);
        assert_eq!(p.validation.as_ref().unwrap().len(), 15);
        assert_eq!(p.test.len(), 15);
        assert_eq!(p.test_start, 80);
        assert!(p.test.targets.data().iter().all(|&v| v > 1.0));
        let none = prepare(&series, 0.8, 0.0, 5).unwrap();
        assert!(none.validation.is_none());
    }

    #[test]
    fn short_validation_and_test_parts_are_dropped() {
        let series = Tensor::new(vec![100, 1], (0..100).map(f64::from).collect()).unwrap();
        let p = prepare(&series, 0.8, 0.1, 30).unwrap();
        assert!(p.validation.is_none());
        assert!(p.test.is_empty());
        assert_eq!(p.test.inputs.shape(), &[0, 30, 1]);
        assert_eq!(p.train.len(), 50);
        assert!(prepare(&series, 0.2, 0.0, 30).is_err());
    }
}
