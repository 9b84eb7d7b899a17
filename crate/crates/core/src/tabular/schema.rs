use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{EdfError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Numeric,
    /// Indicator column expanded from a categorical source column.
    OnehotDerived,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl FeatureColumn {
    pub fn numeric(name: impl Into<String>) -> Self {
        FeatureColumn {
            name: name.into(),
            kind: ColumnKind::Numeric,
            source: None,
            category: None,
        }
    }

    pub fn onehot(source: &str, category: &str) -> Self {
        FeatureColumn {
            name: format!("{source}.{category}"),
            kind: ColumnKind::OnehotDerived,
            source: Some(source.to_string()),
            category: Some(category.to_string()),
        }
    }

    /// Name of the raw CSV column this feature is computed from.
    pub fn source_column(&self) -> &str {
        self.source.as_deref().unwrap_or(&self.name)
    }
}

/// Ordered description of the columns of a feature matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureColumn>", into = "Vec<FeatureColumn>")]
pub struct FeatureSchema {
    columns: Vec<FeatureColumn>,
}

impl FeatureSchema {
    pub fn new(columns: Vec<FeatureColumn>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(EdfError::DuplicateColumn(c.name.clone()));
            }
            if c.kind == ColumnKind::OnehotDerived && (c.source.is_none() || c.category.is_none()) {
                return Err(EdfError::Config(format!(
                    "one-hot column `{}` must record its source column and category",
                    c.name
                )));
            }
        }
        Ok(FeatureSchema { columns })
    }

    /// Schema of `p` numeric columns named `x0, x1, ...`.
    pub fn numeric(p: usize) -> Self {
        FeatureSchema {
            columns: (0..p).map(|j| FeatureColumn::numeric(format!("x{j}"))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Indices of every column derived from raw column `source`, including a
    /// numeric column of that name.
    pub fn derived_from(&self, source: &str) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.source_column() == source)
            .map(|(j, _)| j)
            .collect()
    }

    /// Categories recorded for categorical source `source`, in column order.
    pub fn categories_of(&self, source: &str) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.kind == ColumnKind::OnehotDerived && c.source.as_deref() == Some(source))
            .filter_map(|c| c.category.as_deref())
            .collect()
    }

    /// Mask over columns for a list of raw or encoded column names.
    pub fn mask_for(&self, names: &[String]) -> Result<Vec<bool>> {
        let mut mask = vec![false; self.len()];
        for name in names {
            let mut idx = self.derived_from(name);
            if idx.is_empty() {
                idx.extend(self.index_of(name));
            }
            if idx.is_empty() {
                return Err(EdfError::MissingColumn(name.clone()));
            }
            for j in idx {
                mask[j] = true;
            }
        }
        Ok(mask)
    }
}

impl TryFrom<Vec<FeatureColumn>> for FeatureSchema {
    type Error = EdfError;

    fn try_from(columns: Vec<FeatureColumn>) -> Result<Self> {
        FeatureSchema::new(columns)
    }
}

impl From<FeatureSchema> for Vec<FeatureColumn> {
    fn from(s: FeatureSchema) -> Self {
        s.columns
    }
}
