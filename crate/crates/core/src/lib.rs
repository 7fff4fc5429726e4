//! CNN-LSTM next-day temperature forecasting, built on a small dense-tensor core.
//!
//! The pipeline: [`ingestion`] reads daily CSV records, [`preprocessing`]
//! imputes, splits, scales to `[-1, 1]` and windows them, [`model`] holds the
//! convolution/LSTM stack built from [`layers`], and [`training`] fits it with
//! the [`optimizer`] and reports MSE/RMSE in original units.

pub mod error;
pub mod ingestion;
pub mod layers;
pub mod model;
pub mod optimizer;
pub mod pipeline;
pub mod preprocessing;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use model::{Model, ModelConfig};
pub use preprocessing::{ScalerParams, WindowedDataset};
pub use tensor::{Rng, Tensor};
