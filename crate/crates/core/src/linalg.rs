//! Dense solvers for the small symmetric systems used by the linear models.
//!
//! Two independent routes are provided: a Cholesky factorization for normal
//! equations and a Householder QR for least-squares problems posed directly
//! on a (possibly augmented) design matrix.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{EdfError, Result};

/// A pivot that falls below this fraction of its own original diagonal entry
/// marks the column as numerically dependent on the earlier ones.
pub const RELATIVE_PIVOT_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
}

impl Cholesky {
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(EdfError::DimensionMismatch {
                expected: n,
                found: a.ncols(),
            });
        }
        if n == 0 || a.iter().any(|v| !v.is_finite()) {
            return Err(EdfError::Singular("matrix is empty or non-finite".into()));
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]];
            for k in 0..j {
                diag -= l[[j, k]] * l[[j, k]];
            }
            if diag <= RELATIVE_PIVOT_TOL * a[[j, j]] {
                return Err(EdfError::Singular(format!(
                    "pivot {j} is {diag:.3e} against diagonal {:.3e}",
                    a[[j, j]]
                )));
            }
            let d = diag.sqrt();
            l[[j, j]] = d;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        Ok(Cholesky { lower: l })
    }

    pub fn solve(&self, b: ArrayView1<f64>) -> Result<Array1<f64>> {
        let n = self.lower.nrows();
        if b.len() != n {
            return Err(EdfError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let l = &self.lower;
        let mut z = b.to_owned();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= l[[i, k]] * z[k];
            }
            z[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * z[k];
            }
            z[i] = s / l[[i, i]];
        }
        Ok(z)
    }

    /// Solves for every column of `b`.
    pub fn solve_matrix(&self, b: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::<f64>::zeros(b.raw_dim());
        for (j, col) in b.axis_iter(Axis(1)).enumerate() {
            out.column_mut(j).assign(&self.solve(col)?);
        }
        Ok(out)
    }
}

/// Solves `a x = b` for symmetric positive-definite `a`.
pub fn solve_spd(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    Cholesky::factor(a)?.solve(b)
}

/// Minimizes `‖a x − b‖²` through a Householder QR of `a`.
///
/// Requires `a` to have full column rank; a vanishing diagonal entry of R is
/// reported as a singularity.
pub fn qr_least_squares(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let (m, n) = a.dim();
    if b.len() != m {
        return Err(EdfError::DimensionMismatch {
            expected: m,
            found: b.len(),
        });
    }
    if m < n {
        return Err(EdfError::Singular(format!(
            "{m} rows cannot determine {n} coefficients"
        )));
    }
    let mut r = a.to_owned();
    let mut qtb = b.to_owned();
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(EdfError::Singular("design is non-finite".into()));
    }
    let col_norms: Vec<f64> = (0..n).map(|j| norm2(a.column(j))).collect();
    for k in 0..n {
        let norm = (k..m).map(|i| r[[i, k]] * r[[i, k]]).sum::<f64>().sqrt();
        if norm <= RELATIVE_PIVOT_TOL.sqrt() * col_norms[k] || norm == 0.0 {
            return Err(EdfError::Singular(format!(
                "column {k} is numerically dependent on earlier columns"
            )));
        }
        let alpha = if r[[k, k]] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[[i, k]]).collect();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv > 0.0 {
            for j in k..n {
                let dot: f64 = v.iter().zip(k..m).map(|(vi, i)| vi * r[[i, j]]).sum();
                let f = 2.0 * dot / vv;
                for (vi, i) in v.iter().zip(k..m) {
                    r[[i, j]] -= f * vi;
                }
            }
            let dot: f64 = v.iter().zip(k..m).map(|(vi, i)| vi * qtb[i]).sum();
            let f = 2.0 * dot / vv;
            for (vi, i) in v.iter().zip(k..m) {
                qtb[i] -= f * vi;
            }
        }
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = qtb[i];
        for j in (i + 1)..n {
            s -= r[[i, j]] * x[j];
        }
        x[i] = s / r[[i, i]];
    }
    Ok(x)
}

/// Column means of `x`.
pub fn column_means(x: ArrayView2<f64>) -> Array1<f64> {
    let n = x.nrows().max(1) as f64;
    x.sum_axis(Axis(0)) / n
}

/// `x` with each column shifted by `means`.
pub fn center_columns(x: ArrayView2<f64>, means: ArrayView1<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        row -= &means;
    }
    out
}

pub fn norm2(v: ArrayView1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
