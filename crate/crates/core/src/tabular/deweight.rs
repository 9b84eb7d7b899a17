use serde::{Deserialize, Serialize};

use crate::error::{EdfError, Result};

/// Per-feature deweighting hyperparameters.
///
/// `ridge_d` holds the diagonal of D for the penalized linear fit (the
/// penalty on coefficient i is `d_i² b_i²`); `factor` is the multiplicative
/// weight used by k-NN distances and forest split sampling. Features outside
/// the proxy set always carry `d = 0` and `factor = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeweightSpec {
    pub ridge_d: Vec<f64>,
    pub factor: Vec<f64>,
}

impl DeweightSpec {
    /// No deweighting of any of `p` features.
    pub fn none(p: usize) -> Self {
        DeweightSpec {
            ridge_d: vec![0.0; p],
            factor: vec![1.0; p],
        }
    }

    /// Common ridge penalty `delta = d²` on every proxy feature.
    pub fn common_ridge(c_mask: &[bool], delta: f64) -> Result<Self> {
        Self::ridge_deltas(c_mask, &vec![delta; c_mask.iter().filter(|&&c| c).count()])
    }

    /// Ridge penalties `δ_i = d_i²`, one per proxy feature in column order.
    pub fn ridge_deltas(c_mask: &[bool], deltas: &[f64]) -> Result<Self> {
        let mut it = proxy_values(c_mask, deltas)?;
        let ridge_d = c_mask
            .iter()
            .map(|&c| if c { it.next().map(f64::sqrt).unwrap_or(0.0) } else { 0.0 })
            .collect();
        if deltas.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(EdfError::InvalidParameter(
                "ridge deweighting values must be finite and nonnegative".into(),
            ));
        }
        Self::with_parts(c_mask, ridge_d, vec![1.0; c_mask.len()])
    }

    /// Common multiplicative factor on every proxy feature.
    pub fn common_factor(c_mask: &[bool], factor: f64) -> Result<Self> {
        Self::factors(c_mask, &vec![factor; c_mask.iter().filter(|&&c| c).count()])
    }

    /// Multiplicative factors, one per proxy feature in column order.
    pub fn factors(c_mask: &[bool], factors: &[f64]) -> Result<Self> {
        let mut it = proxy_values(c_mask, factors)?;
        let factor = c_mask
            .iter()
            .map(|&c| if c { it.next().unwrap_or(1.0) } else { 1.0 })
            .collect();
        Self::with_parts(c_mask, vec![0.0; c_mask.len()], factor)
    }

    pub fn with_parts(c_mask: &[bool], ridge_d: Vec<f64>, factor: Vec<f64>) -> Result<Self> {
        let spec = DeweightSpec { ridge_d, factor };
        spec.validate(c_mask)?;
        Ok(spec)
    }

    pub fn len(&self) -> usize {
        self.ridge_d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ridge_d.is_empty()
    }

    pub fn validate(&self, c_mask: &[bool]) -> Result<()> {
        let p = c_mask.len();
        if self.ridge_d.len() != p || self.factor.len() != p {
            return Err(EdfError::DimensionMismatch {
                expected: p,
                found: self.ridge_d.len().max(self.factor.len()),
            });
        }
        for (j, &c) in c_mask.iter().enumerate() {
            let (d, f) = (self.ridge_d[j], self.factor[j]);
            if !d.is_finite() || d < 0.0 {
                return Err(EdfError::InvalidParameter(format!("ridge d[{j}] = {d} is not a finite nonnegative value")));
            }
            if !f.is_finite() || !(0.0..=1.0).contains(&f) {
                return Err(EdfError::InvalidParameter(format!("factor[{j}] = {f} is outside [0, 1]")));
            }
            if !c && (d != 0.0 || f != 1.0) {
                return Err(EdfError::InvalidParameter(format!(
                    "feature {j} is outside the proxy set but is deweighted"
                )));
            }
        }
        Ok(())
    }
}

fn proxy_values<'a>(c_mask: &[bool], values: &'a [f64]) -> Result<impl Iterator<Item = f64> + 'a> {
    let n_c = c_mask.iter().filter(|&&c| c).count();
    if values.len() != n_c {
        return Err(EdfError::DimensionMismatch {
            expected: n_c,
            found: values.len(),
        });
    }
    Ok(values.iter().copied())
}
