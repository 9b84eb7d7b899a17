//! Brute-force k-nearest-neighbor regression and classification with
//! per-coordinate distance weights.
//!
//! The distance is `sqrt(Σ w_i (a_i − b_i)²)`; a weight of 0 removes the
//! coordinate entirely and 1 leaves it untouched. Ties at the k-th distance
//! go to the lowest training-row index.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EdfError, Result};
use crate::tabular::{Dataset, DeweightSpec, OutcomeKind};

pub const DEFAULT_K: usize = 25;

pub fn weighted_distance(a: ArrayView1<f64>, b: ArrayView1<f64>, weights: &[f64]) -> f64 {
    squared_distance(a, b, weights).sqrt()
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>, weights: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .zip(weights)
        .map(|((x, y), w)| w * (x - y) * (x - y))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub weights: Vec<f64>,
    pub y_kind: OutcomeKind,
    #[serde(skip)]
    train_x: Array2<f64>,
    #[serde(skip)]
    train_y: Array1<f64>,
}

pub fn knn_fit(train: &Dataset, spec: &DeweightSpec, k: usize) -> Result<KnnModel> {
    spec.validate(train.c_mask())?;
    KnnModel::from_parts(
        train.x().to_owned(),
        train.y().to_owned(),
        spec.factor.clone(),
        k,
        train.y_kind(),
    )
}

impl KnnModel {
    /// Stores the training rows as given; duplicates are kept.
    pub fn from_parts(
        train_x: Array2<f64>,
        train_y: Array1<f64>,
        weights: Vec<f64>,
        k: usize,
        y_kind: OutcomeKind,
    ) -> Result<Self> {
        let n = train_x.nrows();
        if k < 1 || k > n {
            return Err(EdfError::InvalidParameter(format!(
                "k = {k} must lie in [1, {n}]"
            )));
        }
        if train_y.len() != n {
            return Err(EdfError::LengthMismatch {
                left: n,
                right: train_y.len(),
            });
        }
        if weights.len() != train_x.ncols() {
            return Err(EdfError::DimensionMismatch {
                expected: train_x.ncols(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(EdfError::InvalidParameter(
                "distance weights must be finite and nonnegative".into(),
            ));
        }
        if y_kind == OutcomeKind::Binary && train_y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(EdfError::InvalidParameter("binary outcome must be 0/1".into()));
        }
        Ok(KnnModel {
            k,
            weights,
            y_kind,
            train_x,
            train_y,
        })
    }

    /// Reattaches training data after deserialization.
    pub fn with_training_data(self, train_x: Array2<f64>, train_y: Array1<f64>) -> Result<Self> {
        KnnModel::from_parts(train_x, train_y, self.weights, self.k, self.y_kind)
    }

    pub fn n_train(&self) -> usize {
        self.train_x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.train_x.ncols()
    }

    /// Indices of the k nearest training rows, nearest first.
    pub fn neighbors(&self, query: ArrayView1<f64>) -> Result<Vec<usize>> {
        if query.len() != self.n_features() {
            return Err(EdfError::DimensionMismatch {
                expected: self.n_features(),
                found: query.len(),
            });
        }
        let mut dist: Vec<(f64, usize)> = self
            .train_x
            .axis_iter(Axis(0))
            .enumerate()
            .map(|(i, row)| (squared_distance(query, row, &self.weights), i))
            .collect();
        let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, by_key);
            dist.truncate(self.k);
        }
        dist.sort_unstable_by(by_key);
        Ok(dist.into_iter().map(|(_, i)| i).collect())
    }

    fn neighbor_mean(&self, query: ArrayView1<f64>) -> Result<f64> {
        let nb = self.neighbors(query)?;
        Ok(nb.iter().map(|&i| self.train_y[i]).sum::<f64>() / nb.len() as f64)
    }

    fn check_dims(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.n_features() {
            return Err(EdfError::DimensionMismatch {
                expected: self.n_features(),
                found: x.ncols(),
            });
        }
        Ok(())
    }

    /// Neighbor mean of y for every query row.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_dims(x)?;
        let rows: Vec<ArrayView1<f64>> = x.axis_iter(Axis(0)).collect();
        let out: Result<Vec<f64>> = rows.par_iter().map(|r| self.neighbor_mean(*r)).collect();
        Ok(Array1::from(out?))
    }

    /// Class frequencies `[P(Y = 0), P(Y = 1)]` among the neighbors, one row
    /// per query.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if self.y_kind != OutcomeKind::Binary {
            return Err(EdfError::NoProbabilityOutput);
        }
        let p1 = self.predict(x)?;
        let mut out = Array2::zeros((p1.len(), 2));
        for (i, &v) in p1.iter().enumerate() {
            out[[i, 0]] = 1.0 - v;
            out[[i, 1]] = v;
        }
        Ok(out)
    }
}
