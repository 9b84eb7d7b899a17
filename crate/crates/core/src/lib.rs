//! Fairness-constrained prediction by explicitly deweighting proxy features.
//!
//! Sensitive attributes S never enter the feature matrix. A designated set
//! C of proxy features is deweighted instead: by a per-feature ridge
//! penalty in the linear model, by distance weights in k-NN and by split
//! sampling weights in random forests. Fairness is measured by the squared
//! correlation between the predictions and S (or an estimate of
//! `P(S = 1 | X)`), and the harness traces out the fairness-utility
//! tradeoff over a grid of deweighting values.

pub mod artifact;
pub mod error;
pub mod fairness;
pub mod forest;
pub mod harness;
pub mod knn;
pub mod linalg;
pub mod linear;
pub mod model;
pub mod stats;
pub mod tabular;
pub mod twostage;

pub use error::{EdfError, ErrorClass, Result};
pub use model::{DeweightValue, FittedModel, ModelFamily, Predictor};
