//! Two-stage residualization baseline.
//!
//! Stage one regresses every feature on the sensitive attributes and keeps
//! the residuals `U = X − Sγ`, which are uncorrelated with S in sample.
//! Stage two fits `Y ~ S a + U b` with a ridge penalty `λ‖a‖²` on the
//! sensitive coefficients. S-free predictions use `β′U` only.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{EdfError, Result};
use crate::linalg::{self, Cholesky};
use crate::tabular::Dataset;

/// Residual columns whose norm falls below this fraction of the centered
/// feature norm are treated as fully explained by S.
const EXPLAINED_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageModel {
    /// First-stage coefficients, q×p: row k holds the effect of sensitive
    /// column k on every feature.
    pub gamma: Array2<f64>,
    pub alpha: Array1<f64>,
    pub beta: Array1<f64>,
    pub lambda: f64,
    /// Chosen so that the S-free prediction is `intercept + β′(x − sγ)`.
    pub intercept: f64,
    pub s_mean: Array1<f64>,
}

pub fn fit_twostage(train: &Dataset, lambda: f64) -> Result<TwoStageModel> {
    fit_twostage_arrays(train.x(), train.s(), train.y(), lambda)
}

pub fn fit_twostage_arrays(
    x: ArrayView2<f64>,
    s: ArrayView2<f64>,
    y: ArrayView1<f64>,
    lambda: f64,
) -> Result<TwoStageModel> {
    let n = x.nrows();
    if s.nrows() != n || y.len() != n {
        return Err(EdfError::LengthMismatch {
            left: n,
            right: if s.nrows() != n { s.nrows() } else { y.len() },
        });
    }
    if s.ncols() == 0 {
        return Err(EdfError::InvalidParameter(
            "two-stage fit needs at least one sensitive column".into(),
        ));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(EdfError::InvalidParameter(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    let q = s.ncols();
    let p = x.ncols();

    let x_mean = linalg::column_means(x);
    let s_mean = linalg::column_means(s);
    let y_mean = y.mean().unwrap_or(0.0);
    let xc = linalg::center_columns(x, x_mean.view());
    let sc = linalg::center_columns(s, s_mean.view());
    let yc = y.mapv(|v| v - y_mean);

    let sts = sc.t().dot(&sc);
    let first = Cholesky::factor(sts.view())
        .map_err(|e| EdfError::Singular(format!("S'S is singular: {e}")))?;
    let gamma = first.solve_matrix(sc.t().dot(&xc).view())?;
    let u = &xc - &sc.dot(&gamma);

    for j in 0..p {
        let un = linalg::norm2(u.column(j));
        let xn = linalg::norm2(xc.column(j));
        if un <= EXPLAINED_TOL * xn {
            return Err(EdfError::Singular(format!(
                "second stage: feature {j} is fully explained by the sensitive attributes"
            )));
        }
    }

    let z = concatenate![Axis(1), sc, u];
    let mut gram = z.t().dot(&z);
    for k in 0..q {
        gram[[k, k]] += lambda;
    }
    let coef = Cholesky::factor(gram.view())
        .map_err(|e| EdfError::Singular(format!("second stage: {e}")))?
        .solve(z.t().dot(&yc).view())?;
    let alpha = coef.slice(ndarray::s![..q]).to_owned();
    let beta = coef.slice(ndarray::s![q..]).to_owned();
    let intercept = y_mean - beta.dot(&(&x_mean - &s_mean.dot(&gamma)));

    Ok(TwoStageModel {
        gamma,
        alpha,
        beta,
        lambda,
        intercept,
        s_mean,
    })
}

impl TwoStageModel {
    pub fn n_features(&self) -> usize {
        self.beta.len()
    }

    pub fn n_sensitive(&self) -> usize {
        self.alpha.len()
    }

    /// Residualized features `x − sγ`.
    pub fn residualize(&self, x: ArrayView2<f64>, s: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features() {
            return Err(EdfError::DimensionMismatch {
                expected: self.n_features(),
                found: x.ncols(),
            });
        }
        if s.ncols() != self.n_sensitive() {
            return Err(EdfError::DimensionMismatch {
                expected: self.n_sensitive(),
                found: s.ncols(),
            });
        }
        if s.nrows() != x.nrows() {
            return Err(EdfError::LengthMismatch {
                left: x.nrows(),
                right: s.nrows(),
            });
        }
        Ok(&x - &s.dot(&self.gamma))
    }

    /// S-free prediction `intercept + β′(x − sγ)`.
    pub fn predict_sfree(&self, x: ArrayView2<f64>, s: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.residualize(x, s)?.dot(&self.beta) + self.intercept)
    }

    /// Prediction that also keeps the `α′(s − s̄)` term of the second stage.
    pub fn predict_with_sensitive(&self, x: ArrayView2<f64>, s: ArrayView2<f64>) -> Result<Array1<f64>> {
        let base = self.predict_sfree(x, s)?;
        let sc = linalg::center_columns(s, self.s_mean.view());
        Ok(base + sc.dot(&self.alpha))
    }

    pub fn predict(
        &self,
        x: ArrayView2<f64>,
        s: ArrayView2<f64>,
        include_sensitive: bool,
    ) -> Result<Array1<f64>> {
        if include_sensitive {
            self.predict_with_sensitive(x, s)
        } else {
            self.predict_sfree(x, s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use ndarray::array;

    fn fixture() -> (Array2<f64>, Array2<f64>, Array1<f64>) {
        let x = array![
            [1.0, 0.3],
            [2.0, -0.1],
            [0.5, 0.8],
            [1.5, 1.1],
            [3.0, -0.7],
            [2.2, 0.4],
            [0.1, 0.0]
        ];
        let s = array![[0.0], [1.0], [0.0], [1.0], [1.0], [1.0], [0.0]];
        let y = array![1.0, 2.5, 0.9, 2.0, 3.1, 2.4, 0.2];
        (x, s, y)
    }

    #[test]
    fn fitted_values_orthogonal_to_s() {
        let (x, s, y) = fixture();
        let m = fit_twostage_arrays(x.view(), s.view(), y.view(), 0.0).unwrap();
        let yhat = m.predict_sfree(x.view(), s.view()).unwrap();
        let c = stats::sample_covariance(&yhat.to_vec(), &s.column(0).to_vec());
        assert!(c.abs() < 1e-12, "cov = {c}");
    }

    #[test]
    fn zero_sensitive_input_gives_linear_prediction() {
        let (x, s, y) = fixture();
        let m = fit_twostage_arrays(x.view(), s.view(), y.view(), 0.5).unwrap();
        let xn = array![[0.7, -0.2]];
        let p = m.predict_sfree(xn.view(), array![[0.0]].view()).unwrap()[0];
        assert!((p - (m.intercept + xn.row(0).dot(&m.beta))).abs() < 1e-14);
    }

    #[test]
    fn feature_equal_to_s_is_singular() {
        let s = array![[0.0], [1.0], [2.0], [3.0], [5.0]];
        let x = s.clone();
        let y = array![1.0, 0.0, 2.0, 1.0, 3.0];
        assert!(matches!(
            fit_twostage_arrays(x.view(), s.view(), y.view(), 0.0),
            Err(EdfError::Singular(_))
        ));
    }

    #[test]
    fn constant_s_is_singular() {
        let (x, _, y) = fixture();
        let s = Array2::from_elem((7, 1), 1.0);
        assert!(matches!(
            fit_twostage_arrays(x.view(), s.view(), y.view(), 0.0),
            Err(EdfError::Singular(_))
        ));
    }

    #[test]
    fn alpha_shrinks_with_lambda() {
        let (x, s, y) = fixture();
        let mut prev = f64::INFINITY;
        for lambda in [0.0, 0.1, 1.0, 10.0, 100.0] {
            let m = fit_twostage_arrays(x.view(), s.view(), y.view(), lambda).unwrap();
            let a = linalg::norm2(m.alpha.view());
            assert!(a <= prev + 1e-12);
            prev = a;
        }
    }

    #[test]
    fn sensitive_term_flag() {
        let (x, s, y) = fixture();
        let m = fit_twostage_arrays(x.view(), s.view(), y.view(), 0.0).unwrap();
        let a = m.predict(x.view(), s.view(), false).unwrap();
        let b = m.predict(x.view(), s.view(), true).unwrap();
        let sm = m.s_mean[0];
        for i in 0..7 {
            assert!((b[i] - a[i] - m.alpha[0] * (s[[i, 0]] - sm)).abs() < 1e-12);
        }
    }
}
