//! Classification and regression trees for functional data whose splits are
//! integral features under weight functions learned at every node.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, with `F32` variants for single precision.

pub mod cv;
pub mod error;
pub mod fdata;
pub mod features;
mod linalg;
pub mod optim;
pub mod scalar;
pub mod sim;
pub mod split;
pub mod tree;
pub mod weights;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = fdata::FunctionalDataset<f64>;
pub type Model = tree::MuCartModel<f64>;
pub type Config = tree::TreeConfig<f64>;
pub type Report = cv::CvReport<f64>;

pub type DatasetF32 = fdata::FunctionalDataset<f32>;
pub type ModelF32 = tree::MuCartModel<f32>;
pub type ConfigF32 = tree::TreeConfig<f32>;
