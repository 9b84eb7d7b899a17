use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::schema::{ColumnKind, FeatureSchema};
use crate::error::{EdfError, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

/// How the outcome column was decoded; for two-valued categorical outcomes
/// `positive_label` is the raw value mapped to 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeEncoding {
    pub name: String,
    pub kind: OutcomeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensitiveKind {
    Continuous,
    Binary,
}

/// One column of the sensitive matrix S.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensitiveColumn {
    /// Report label, e.g. `race.black`.
    pub name: String,
    pub kind: SensitiveKind,
    /// Raw CSV column.
    pub source: String,
    /// Raw value mapped to 1 for indicator columns built from categorical data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub mean: f64,
    pub sd: f64,
}

impl ColumnScaling {
    pub const IDENTITY: ColumnScaling = ColumnScaling { mean: 0.0, sd: 1.0 };
}

/// Per-column affine map from raw to standardized feature values.
///
/// Numeric columns are centered and scaled by their sample standard deviation
/// (`n − 1` denominator); one-hot columns keep their 0/1 coding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub columns: Vec<ColumnScaling>,
}

impl Standardization {
    pub fn fit(raw: ArrayView2<f64>, schema: &FeatureSchema) -> Result<Self> {
        if raw.ncols() != schema.len() {
            return Err(EdfError::DimensionMismatch {
                expected: schema.len(),
                found: raw.ncols(),
            });
        }
        let mut columns = Vec::with_capacity(schema.len());
        for (j, col) in schema.columns().iter().enumerate() {
            let scaling = match col.kind {
                ColumnKind::OnehotDerived => ColumnScaling::IDENTITY,
                ColumnKind::Numeric => {
                    let v = raw.column(j).to_vec();
                    let sd = stats::sample_sd(&v);
                    let mean = stats::mean(&v);
                    if sd == 0.0 || !sd.is_finite() || sd <= 1e-12 * mean.abs() {
                        return Err(EdfError::ConstantColumn(col.name.clone()));
                    }
                    ColumnScaling { mean, sd }
                }
            };
            columns.push(scaling);
        }
        Ok(Standardization { columns })
    }

    pub fn identity(p: usize) -> Self {
        Standardization {
            columns: vec![ColumnScaling::IDENTITY; p],
        }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn apply(&self, raw: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(raw.ncols())?;
        let mut out = raw.to_owned();
        for (mut col, s) in out.axis_iter_mut(Axis(1)).zip(&self.columns) {
            col.mapv_inplace(|v| (v - s.mean) / s.sd);
        }
        Ok(out)
    }

    pub fn apply_row(&self, raw: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check(raw.len())?;
        Ok(raw
            .iter()
            .zip(&self.columns)
            .map(|(v, s)| (v - s.mean) / s.sd)
            .collect())
    }

    pub fn invert(&self, standardized: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(standardized.ncols())?;
        let mut out = standardized.to_owned();
        for (mut col, s) in out.axis_iter_mut(Axis(1)).zip(&self.columns) {
            col.mapv_inplace(|v| v * s.sd + s.mean);
        }
        Ok(out)
    }

    fn check(&self, p: usize) -> Result<()> {
        if p != self.columns.len() {
            return Err(EdfError::DimensionMismatch {
                expected: self.columns.len(),
                found: p,
            });
        }
        Ok(())
    }
}

/// Raw inputs for [`Dataset::from_raw`].
#[derive(Debug, Clone)]
pub struct DatasetParts {
    /// Unstandardized n×p feature matrix.
    pub x_raw: Array2<f64>,
    pub y: Array1<f64>,
    pub outcome: OutcomeEncoding,
    /// n×q sensitive matrix; never part of `x_raw`.
    pub s: Array2<f64>,
    pub sensitive: Vec<SensitiveColumn>,
    pub schema: FeatureSchema,
    pub c_mask: Vec<bool>,
}

/// Standardized design matrix with outcome, sensitive attributes and the
/// proxy-set designation. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    outcome: OutcomeEncoding,
    s: Array2<f64>,
    sensitive: Vec<SensitiveColumn>,
    schema: FeatureSchema,
    c_mask: Vec<bool>,
    standardization: Standardization,
}

impl Dataset {
    /// Validates `parts` and standardizes the features on these rows.
    pub fn from_raw(parts: DatasetParts) -> Result<Self> {
        let standardization = Standardization::fit(parts.x_raw.view(), &parts.schema)?;
        Self::from_raw_with(parts, standardization)
    }

    /// Validates `parts` and standardizes them with precomputed statistics.
    pub fn from_raw_with(parts: DatasetParts, standardization: Standardization) -> Result<Self> {
        let DatasetParts {
            x_raw,
            y,
            outcome,
            s,
            sensitive,
            schema,
            c_mask,
        } = parts;
        let (n, p) = x_raw.dim();
        if n < 2 {
            return Err(EdfError::TooFewValues { needed: 2, found: n });
        }
        if p == 0 || schema.len() != p {
            return Err(EdfError::DimensionMismatch {
                expected: schema.len().max(1),
                found: p,
            });
        }
        if y.len() != n {
            return Err(EdfError::LengthMismatch { left: n, right: y.len() });
        }
        if s.nrows() != n {
            return Err(EdfError::LengthMismatch { left: n, right: s.nrows() });
        }
        if s.ncols() != sensitive.len() {
            return Err(EdfError::DimensionMismatch {
                expected: sensitive.len(),
                found: s.ncols(),
            });
        }
        if c_mask.len() != p {
            return Err(EdfError::DimensionMismatch {
                expected: p,
                found: c_mask.len(),
            });
        }
        for (j, col) in schema.columns().iter().enumerate() {
            if let Some(row) = x_raw.column(j).iter().position(|v| !v.is_finite()) {
                return Err(EdfError::NonFinite {
                    column: col.name.clone(),
                    row,
                });
            }
            if sensitive.iter().any(|sc| sc.source == col.source_column()) {
                return Err(EdfError::SensitiveInProxySet(col.name.clone()));
            }
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(EdfError::NonFinite {
                column: outcome.name.clone(),
                row,
            });
        }
        if outcome.kind == OutcomeKind::Binary && y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(EdfError::InvalidOutcome {
                column: outcome.name.clone(),
                reason: "binary outcome values must be exactly 0 or 1".into(),
            });
        }
        for (k, sc) in sensitive.iter().enumerate() {
            let col = s.column(k);
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(EdfError::NonFinite {
                    column: sc.name.clone(),
                    row,
                });
            }
            if sc.kind == SensitiveKind::Binary && col.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(EdfError::Config(format!(
                    "binary sensitive column `{}` must hold 0/1 values",
                    sc.name
                )));
            }
        }
        let x = standardization.apply(x_raw.view())?;
        Ok(Dataset {
            x,
            y,
            outcome,
            s,
            sensitive,
            schema,
            c_mask,
            standardization,
        })
    }

    /// All-numeric dataset with generated names (`x0..`, `s0..`, `y`).
    ///
    /// The outcome and each sensitive column are treated as binary when every
    /// value is 0 or 1.
    pub fn from_numeric(
        x_raw: Array2<f64>,
        y: Array1<f64>,
        s: Array2<f64>,
        c_mask: Vec<bool>,
    ) -> Result<Self> {
        let kind = if is_indicator(y.view()) {
            OutcomeKind::Binary
        } else {
            OutcomeKind::Continuous
        };
        let sensitive = s
            .axis_iter(Axis(1))
            .enumerate()
            .map(|(k, col)| SensitiveColumn {
                name: format!("s{k}"),
                kind: if is_indicator(col) {
                    SensitiveKind::Binary
                } else {
                    SensitiveKind::Continuous
                },
                source: format!("s{k}"),
                category: None,
            })
            .collect();
        let schema = FeatureSchema::numeric(x_raw.ncols());
        Dataset::from_raw(DatasetParts {
            x_raw,
            y,
            outcome: OutcomeEncoding {
                name: "y".into(),
                kind,
                positive_label: None,
            },
            s,
            sensitive,
            schema,
            c_mask,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_sensitive(&self) -> usize {
        self.s.ncols()
    }

    /// Standardized features.
    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn y_kind(&self) -> OutcomeKind {
        self.outcome.kind
    }

    pub fn outcome(&self) -> &OutcomeEncoding {
        &self.outcome
    }

    pub fn s(&self) -> ArrayView2<'_, f64> {
        self.s.view()
    }

    pub fn sensitive(&self) -> &[SensitiveColumn] {
        &self.sensitive
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn c_mask(&self) -> &[bool] {
        &self.c_mask
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    /// Features mapped back to their raw scale.
    pub fn x_raw(&self) -> Array2<f64> {
        self.standardization
            .invert(self.x.view())
            .expect("standardization matches feature count")
    }

    /// Same rows with a different proxy-set designation.
    pub fn with_c_mask(&self, c_mask: Vec<bool>) -> Result<Self> {
        if c_mask.len() != self.n_features() {
            return Err(EdfError::DimensionMismatch {
                expected: self.n_features(),
                found: c_mask.len(),
            });
        }
        Ok(Dataset {
            c_mask,
            ..self.clone()
        })
    }

    /// Same rows keeping only the sensitive columns at `indices`, in order.
    pub fn select_sensitive(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&j| j >= self.n_sensitive()) {
            return Err(EdfError::InvalidParameter(format!(
                "sensitive index {bad} out of range ({} columns)",
                self.n_sensitive()
            )));
        }
        Ok(Dataset {
            s: self.s.select(Axis(1), indices),
            sensitive: indices.iter().map(|&j| self.sensitive[j].clone()).collect(),
            ..self.clone()
        })
    }

    pub(crate) fn parts_for_rows(&self, raw: &Array2<f64>, rows: &[usize]) -> DatasetParts {
        DatasetParts {
            x_raw: raw.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
            outcome: self.outcome.clone(),
            s: self.s.select(Axis(0), rows),
            sensitive: self.sensitive.clone(),
            schema: self.schema.clone(),
            c_mask: self.c_mask.clone(),
        }
    }
}

pub(crate) fn is_indicator(v: ArrayView1<f64>) -> bool {
    v.iter().all(|&x| x == 0.0 || x == 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small() -> Dataset {
        let x = array![[1.0, 10.0], [2.0, 20.0], [3.0, 25.0], [4.0, 45.0]];
        let y = array![1.0, 2.0, 3.0, 4.0];
        let s = array![[0.0], [1.0], [0.0], [1.0]];
        Dataset::from_numeric(x, y, s, vec![true, false]).unwrap()
    }

    #[test]
    fn standardized_columns_have_zero_mean_unit_sd() {
        let d = small();
        for col in d.x().axis_iter(Axis(1)) {
            let v = col.to_vec();
            assert!(stats::mean(&v).abs() < 1e-8);
            assert!((stats::sample_sd(&v) - 1.0).abs() < 1e-8);
        }
        assert_eq!(d.y_kind(), OutcomeKind::Continuous);
        assert_eq!(d.sensitive()[0].kind, SensitiveKind::Binary);
    }

    #[test]
    fn destandardize_recovers_raw() {
        let d = small();
        let raw = d.x_raw();
        assert!((raw[[3, 1]] - 45.0).abs() < 1e-10 * 45.0);
        assert!((raw[[0, 0]] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn constant_column_rejected() {
        let x = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
        let err = Dataset::from_numeric(x, array![1.0, 0.0, 1.0], Array2::zeros((3, 0)), vec![false, false])
            .unwrap_err();
        assert!(matches!(err, EdfError::ConstantColumn(ref c) if c == "x1"));
    }

    #[test]
    fn non_binary_outcome_rejected_for_binary_kind() {
        let d = small();
        let mut parts = d.parts_for_rows(&d.x_raw(), &[0, 1, 2, 3]);
        parts.outcome.kind = OutcomeKind::Binary;
        assert!(matches!(
            Dataset::from_raw(parts),
            Err(EdfError::InvalidOutcome { .. })
        ));
    }

    #[test]
    fn single_row_rejected() {
        let err = Dataset::from_numeric(array![[1.0]], array![1.0], Array2::zeros((1, 0)), vec![false]);
        assert!(err.is_err());
    }
}
