use crate::error::{Error, Result};

/// `(1/n) Σ (y_i - ŷ_i)²`
pub fn mse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::Dimension {
            op: "mse",
            left: vec![actual.len()],
            right: vec![predicted.len()],
        });
    }
    if actual.is_empty() {
        return Err(Error::InsufficientData("mse of an empty series".into()));
    }
    let sum = actual
        .iter()
        .zip(predicted)
        .fold(0.0, |s, (y, p)| s + (y - p) * (y - p));
    Ok(sum / actual.len() as f64)
}

/// `sqrt(mse)`
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    Ok(mse(actual, predicted)?.sqrt())
}
