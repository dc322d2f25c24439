//! Ridge regression for data with many more predictors than observations,
//! with a semi-automatic choice of the ridge parameter.
//!
//! The ridge parameter is estimated as `k_r = r * sigma_r^2 / sum_{j<=r} alpha_j^2`
//! from the leading `r` principal components, and `r` is chosen so that the
//! variance degrees of freedom `tr(HH')` of the resulting fit equal `r`.

pub mod baselines;
pub mod error;
pub mod io;
pub mod linalg;
pub mod logistic;
pub mod ridge;
pub mod select;
pub mod sim;
pub mod workflow;

pub use error::{Error, Result};
