//! Generalized ridge regression that penalizes only proxy features.
//!
//! The fit minimizes `‖Y − Xb‖² + ‖Db‖²` with `D = diag(d_1, …, d_p)`, whose
//! solution is `b = (X′X + D²)⁻¹ X′Y`. Entries of D are zero off the proxy
//! set, so those coefficients are not shrunk. Both X and Y are centered
//! first; the intercept is recovered from the means and never penalized.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{EdfError, Result};
use crate::linalg::{self, Cholesky};
use crate::tabular::{Dataset, DeweightSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    ClosedForm,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeDeweightModel {
    pub coefficients: Array1<f64>,
    pub intercept: f64,
    /// Diagonal of D.
    pub d: Array1<f64>,
    pub fit_method: FitMethod,
}

struct Centered {
    x: Array2<f64>,
    y: Array1<f64>,
    x_mean: Array1<f64>,
    y_mean: f64,
}

fn center(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Centered {
    let x_mean = linalg::column_means(x);
    let y_mean = y.mean().unwrap_or(0.0);
    Centered {
        x: linalg::center_columns(x, x_mean.view()),
        y: y.mapv(|v| v - y_mean),
        x_mean,
        y_mean,
    }
}

fn check_spec(train: &Dataset, spec: &DeweightSpec) -> Result<Array1<f64>> {
    spec.validate(train.c_mask())?;
    Ok(Array1::from(spec.ridge_d.clone()))
}

/// Solves `(X′X + D²) b = X′Y` on centered data by Cholesky factorization.
pub fn fit_closed_form(train: &Dataset, spec: &DeweightSpec) -> Result<RidgeDeweightModel> {
    let d = check_spec(train, spec)?;
    fit_closed_form_arrays(train.x(), train.y(), d.view())
}

pub fn fit_closed_form_arrays(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    d: ArrayView1<f64>,
) -> Result<RidgeDeweightModel> {
    check_shapes(x, y, d)?;
    let c = center(x, y);
    let mut gram = c.x.t().dot(&c.x);
    for (j, dj) in d.iter().enumerate() {
        gram[[j, j]] += dj * dj;
    }
    let rhs = c.x.t().dot(&c.y);
    let coefficients = Cholesky::factor(gram.view())
        .map_err(|e| singular_context(e, "X'X + D^2"))?
        .solve(rhs.view())?;
    Ok(finish(coefficients, &c, d, FitMethod::ClosedForm))
}

/// Appends the rows of D to the centered design and zeros to the centered
/// outcome, then solves the ordinary least-squares problem on the augmented
/// data with a QR factorization.
pub fn fit_augmented(train: &Dataset, spec: &DeweightSpec) -> Result<RidgeDeweightModel> {
    let d = check_spec(train, spec)?;
    fit_augmented_arrays(train.x(), train.y(), d.view())
}

pub fn fit_augmented_arrays(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    d: ArrayView1<f64>,
) -> Result<RidgeDeweightModel> {
    check_shapes(x, y, d)?;
    let c = center(x, y);
    let (a, b) = augmented_system(c.x.view(), c.y.view(), d);
    let coefficients = linalg::qr_least_squares(a.view(), b.view())
        .map_err(|e| singular_context(e, "augmented design"))?;
    Ok(finish(coefficients, &c, d, FitMethod::Augmented))
}

/// The augmented design `[X; D]` and outcome `[Y; 0]`.
pub fn augmented_system(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    d: ArrayView1<f64>,
) -> (Array2<f64>, Array1<f64>) {
    let p = d.len();
    let dmat = Array2::from_diag(&d);
    let a = concatenate![Axis(0), x, dmat];
    let b = concatenate![Axis(0), y, Array1::<f64>::zeros(p)];
    (a, b)
}

fn check_shapes(x: ArrayView2<f64>, y: ArrayView1<f64>, d: ArrayView1<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(EdfError::LengthMismatch {
            left: x.nrows(),
            right: y.len(),
        });
    }
    if x.ncols() != d.len() {
        return Err(EdfError::DimensionMismatch {
            expected: x.ncols(),
            found: d.len(),
        });
    }
    if x.nrows() == 0 {
        return Err(EdfError::EmptyInput);
    }
    if d.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(EdfError::InvalidParameter("d must be finite and nonnegative".into()));
    }
    Ok(())
}

fn singular_context(err: EdfError, what: &str) -> EdfError {
    match err {
        EdfError::Singular(msg) => EdfError::Singular(format!(
            "{what} is singular ({msg}); a feature is collinear with others and carries no ridge penalty"
        )),
        other => other,
    }
}

fn finish(
    coefficients: Array1<f64>,
    c: &Centered,
    d: ArrayView1<f64>,
    fit_method: FitMethod,
) -> RidgeDeweightModel {
    let intercept = c.y_mean - c.x_mean.dot(&coefficients);
    RidgeDeweightModel {
        coefficients,
        intercept,
        d: d.to_owned(),
        fit_method,
    }
}

impl RidgeDeweightModel {
    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    /// `intercept + x·b` on standardized coordinates.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_features() {
            return Err(EdfError::DimensionMismatch {
                expected: self.n_features(),
                found: x.ncols(),
            });
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(EdfError::NonFinite {
                column: format!("x{}", pos % x.ncols()),
                row: pos / x.ncols(),
            });
        }
        Ok(x.dot(&self.coefficients) + self.intercept)
    }

    pub fn predict_row(&self, x: ArrayView1<f64>) -> Result<f64> {
        let x2 = x.insert_axis(Axis(0));
        Ok(self.predict(x2)?[0])
    }

    /// `Σ (d_i b_i)²`, the quantity bounded in the constrained form of the
    /// objective.
    pub fn penalized_norm(&self) -> f64 {
        self.d
            .iter()
            .zip(self.coefficients.iter())
            .map(|(d, b)| (d * b) * (d * b))
            .sum()
    }
}
