//! CSV ingestion: type detection, one-hot expansion and role assignment.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{
    Dataset, DatasetParts, OutcomeEncoding, OutcomeKind, SensitiveColumn, SensitiveKind,
};
use super::schema::{ColumnKind, FeatureColumn, FeatureSchema};
use crate::error::{EdfError, Result};

/// Column roles for a CSV file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRoles {
    pub outcome: String,
    #[serde(default)]
    pub sensitive: Vec<String>,
    /// Raw or encoded column names forming the proxy set C.
    #[serde(default)]
    pub c_features: Vec<String>,
    /// Columns to one-hot encode even when every value parses as a number.
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Columns dropped before encoding.
    #[serde(default)]
    pub ignore: Vec<String>,
    /// Raw outcome value mapped to 1 for two-valued outcomes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_kind: Option<OutcomeKind>,
}

/// A CSV file together with its column roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "FlatDataSpec")]
pub struct DataSpec {
    pub path: PathBuf,
    #[serde(flatten)]
    pub roles: ColumnRoles,
}

// serde ignores deny_unknown_fields on flattened structs, so parse flat.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FlatDataSpec {
    path: PathBuf,
    outcome: String,
    #[serde(default)]
    sensitive: Vec<String>,
    #[serde(default)]
    c_features: Vec<String>,
    #[serde(default)]
    categorical: Vec<String>,
    #[serde(default)]
    ignore: Vec<String>,
    #[serde(default)]
    positive_label: Option<String>,
    #[serde(default)]
    outcome_kind: Option<OutcomeKind>,
}

impl From<FlatDataSpec> for DataSpec {
    fn from(f: FlatDataSpec) -> Self {
        DataSpec {
            path: f.path,
            roles: ColumnRoles {
                outcome: f.outcome,
                sensitive: f.sensitive,
                c_features: f.c_features,
                categorical: f.categorical,
                ignore: f.ignore,
                positive_label: f.positive_label,
                outcome_kind: f.outcome_kind,
            },
        }
    }
}

/// Raw string cells of a CSV file with a header row.
#[derive(Debug, Clone)]
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read_path(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| EdfError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut seen = HashSet::new();
        for h in &headers {
            if !seen.insert(h.as_str()) {
                return Err(EdfError::DuplicateColumn(h.clone()));
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(Table { headers, rows })
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| EdfError::MissingColumn(name.to_string()))
    }

    /// Cells of column `name`; empty cells and `NA` are rejected.
    pub fn cells(&self, name: &str) -> Result<Vec<&str>> {
        let j = self.index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(row, r)| {
                let cell = r[j].as_str();
                if cell.is_empty() || cell == "NA" {
                    Err(EdfError::MissingValue {
                        column: name.to_string(),
                        row,
                    })
                } else {
                    Ok(cell)
                }
            })
            .collect()
    }

    /// Parses column `name` as numbers, or `None` when some cell is not numeric.
    fn numeric(&self, name: &str) -> Result<Option<Vec<f64>>> {
        let cells = self.cells(name)?;
        let mut out = Vec::with_capacity(cells.len());
        for (row, c) in cells.iter().enumerate() {
            match c.parse::<f64>() {
                Ok(v) if v.is_finite() => out.push(v),
                Ok(_) => {
                    return Err(EdfError::NonFinite {
                        column: name.to_string(),
                        row,
                    })
                }
                Err(_) => return Ok(None),
            }
        }
        Ok(Some(out))
    }

    fn numeric_required(&self, name: &str) -> Result<Vec<f64>> {
        self.numeric(name)?.ok_or_else(|| EdfError::InvalidOutcome {
            column: name.to_string(),
            reason: "expected numeric values".into(),
        })
    }
}

/// Loads a CSV file, encodes categoricals and standardizes numeric features.
pub fn load_csv(spec: &DataSpec) -> Result<Dataset> {
    let table = Table::read_path(&spec.path)?;
    dataset_from_table(&table, &spec.roles)
}

pub fn dataset_from_table(table: &Table, roles: &ColumnRoles) -> Result<Dataset> {
    for name in std::iter::once(&roles.outcome)
        .chain(&roles.sensitive)
        .chain(&roles.categorical)
        .chain(&roles.ignore)
    {
        table.index(name)?;
    }
    for c in &roles.c_features {
        if roles.sensitive.contains(c) {
            return Err(EdfError::SensitiveInProxySet(c.clone()));
        }
        if *c == roles.outcome {
            return Err(EdfError::Config(format!(
                "outcome column `{c}` cannot be a deweighted feature"
            )));
        }
    }

    let excluded: HashSet<&str> = std::iter::once(roles.outcome.as_str())
        .chain(roles.sensitive.iter().map(String::as_str))
        .chain(roles.ignore.iter().map(String::as_str))
        .collect();
    let n = table.n_rows();

    let mut columns = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for name in table.headers().iter().filter(|h| !excluded.contains(h.as_str())) {
        let numeric = if roles.categorical.contains(name) {
            None
        } else {
            table.numeric(name)?
        };
        match numeric {
            Some(v) => {
                columns.push(FeatureColumn::numeric(name.clone()));
                values.push(v);
            }
            None => {
                let cells = table.cells(name)?;
                let levels: BTreeSet<&str> = cells.iter().copied().collect();
                if levels.len() < 2 {
                    return Err(EdfError::ConstantColumn(name.clone()));
                }
                for level in levels {
                    columns.push(FeatureColumn::onehot(name, level));
                    values.push(cells.iter().map(|c| f64::from(*c == level)).collect());
                }
            }
        }
    }
    if columns.is_empty() {
        return Err(EdfError::Config("no feature columns remain after assigning roles".into()));
    }
    let schema = FeatureSchema::new(columns)?;
    let c_mask = schema.mask_for(&roles.c_features)?;
    let x_raw = columns_to_matrix(n, &values);

    let (y, outcome) = decode_outcome(table, roles, None)?;
    let (s, sensitive) = decode_sensitive(table, &roles.sensitive, None)?;

    Dataset::from_raw(DatasetParts {
        x_raw,
        y,
        outcome,
        s,
        sensitive,
        schema,
        c_mask,
    })
}

/// Encodes a table against a previously fitted encoding, e.g. holdout or
/// scoring data for a saved model.
pub fn dataset_with_encoding(
    table: &Table,
    reference: &Dataset,
) -> Result<Dataset> {
    let x_raw = encode_features(table, reference.schema())?;
    let roles = ColumnRoles {
        outcome: reference.outcome().name.clone(),
        ..Default::default()
    };
    let (y, outcome) = decode_outcome(table, &roles, Some(reference.outcome()))?;
    let sources: Vec<String> = unique_sources(reference.sensitive());
    let (s, sensitive) = decode_sensitive(table, &sources, Some(reference.sensitive()))?;
    Dataset::from_raw_with(
        DatasetParts {
            x_raw,
            y,
            outcome,
            s,
            sensitive,
            schema: reference.schema().clone(),
            c_mask: reference.c_mask().to_vec(),
        },
        reference.standardization().clone(),
    )
}

/// Raw (unstandardized) feature matrix for `schema` built from `table`.
pub fn encode_features(table: &Table, schema: &FeatureSchema) -> Result<Array2<f64>> {
    let n = table.n_rows();
    let mut values = Vec::with_capacity(schema.len());
    let mut cache: HashMap<&str, Vec<&str>> = HashMap::new();
    for col in schema.columns() {
        match col.kind {
            ColumnKind::Numeric => {
                let v = table.numeric(&col.name)?.ok_or_else(|| EdfError::UnknownCategory {
                    column: col.name.clone(),
                    label: "<non-numeric>".into(),
                })?;
                values.push(v);
            }
            ColumnKind::OnehotDerived => {
                let source = col.source_column();
                if !cache.contains_key(source) {
                    let cells = table.cells(source)?;
                    let known = schema.categories_of(source);
                    if let Some(bad) = cells.iter().find(|c| !known.contains(c)) {
                        return Err(EdfError::UnknownCategory {
                            column: source.to_string(),
                            label: bad.to_string(),
                        });
                    }
                    cache.insert(source, cells);
                }
                let category = col.category.as_deref().unwrap_or_default();
                values.push(cache[source].iter().map(|c| f64::from(*c == category)).collect());
            }
        }
    }
    Ok(columns_to_matrix(n, &values))
}

/// Sensitive matrix for `table` using a previously decoded column layout.
pub fn encode_sensitive(table: &Table, reference: &[SensitiveColumn]) -> Result<Array2<f64>> {
    let sources = unique_sources(reference);
    Ok(decode_sensitive(table, &sources, Some(reference))?.0)
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|source| EdfError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn columns_to_matrix(n: usize, values: &[Vec<f64>]) -> Array2<f64> {
    Array2::from_shape_fn((n, values.len()), |(i, j)| values[j][i])
}

fn unique_sources(cols: &[SensitiveColumn]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for c in cols {
        if !out.contains(&c.source) {
            out.push(c.source.clone());
        }
    }
    out
}

fn decode_outcome(
    table: &Table,
    roles: &ColumnRoles,
    reference: Option<&OutcomeEncoding>,
) -> Result<(Array1<f64>, OutcomeEncoding)> {
    let name = &roles.outcome;
    if let Some(enc) = reference {
        let y = match (&enc.kind, &enc.positive_label) {
            (OutcomeKind::Binary, Some(pos)) => {
                let cells = table.cells(name)?;
                cells.iter().map(|c| f64::from(c == pos)).collect()
            }
            _ => table.numeric_required(name)?,
        };
        return Ok((Array1::from(y), enc.clone()));
    }

    let cells = table.cells(name)?;
    let numeric = table.numeric(name)?;
    let levels: BTreeSet<&str> = cells.iter().copied().collect();
    let indicator = numeric
        .as_ref()
        .is_some_and(|v| v.iter().all(|&x| x == 0.0 || x == 1.0));
    let kind = match roles.outcome_kind {
        Some(k) => k,
        None if indicator => OutcomeKind::Binary,
        None if numeric.is_some() => OutcomeKind::Continuous,
        None if levels.len() == 2 => OutcomeKind::Binary,
        None => {
            return Err(EdfError::InvalidOutcome {
                column: name.clone(),
                reason: format!(
                    "non-numeric outcome must have exactly two values, found {}",
                    levels.len()
                ),
            })
        }
    };
    match kind {
        OutcomeKind::Continuous => {
            let y = numeric.ok_or_else(|| EdfError::InvalidOutcome {
                column: name.clone(),
                reason: "continuous outcome must be numeric".into(),
            })?;
            Ok((
                Array1::from(y),
                OutcomeEncoding {
                    name: name.clone(),
                    kind,
                    positive_label: None,
                },
            ))
        }
        OutcomeKind::Binary if indicator && roles.positive_label.is_none() => Ok((
            Array1::from(numeric.unwrap_or_default()),
            OutcomeEncoding {
                name: name.clone(),
                kind,
                positive_label: None,
            },
        )),
        OutcomeKind::Binary => {
            if levels.len() != 2 {
                return Err(EdfError::InvalidOutcome {
                    column: name.clone(),
                    reason: format!("binary outcome must have two values, found {}", levels.len()),
                });
            }
            let positive = match &roles.positive_label {
                Some(p) if levels.contains(p.as_str()) => p.clone(),
                Some(p) => {
                    return Err(EdfError::InvalidOutcome {
                        column: name.clone(),
                        reason: format!("positive label `{p}` not present"),
                    })
                }
                None => levels.iter().next_back().map(|s| s.to_string()).unwrap_or_default(),
            };
            let y = cells.iter().map(|c| f64::from(*c == positive)).collect();
            Ok((
                Array1::from_vec(y),
                OutcomeEncoding {
                    name: name.clone(),
                    kind,
                    positive_label: Some(positive),
                },
            ))
        }
    }
}

/// Numeric sensitive columns stay as they are (binary when 0/1); categorical
/// ones become indicators, a single one for two-level attributes.
fn decode_sensitive(
    table: &Table,
    names: &[String],
    reference: Option<&[SensitiveColumn]>,
) -> Result<(Array2<f64>, Vec<SensitiveColumn>)> {
    let n = table.n_rows();
    let mut cols = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    if let Some(reference) = reference {
        for sc in reference {
            let v = match &sc.category {
                Some(cat) => table.cells(&sc.source)?.iter().map(|c| f64::from(c == cat)).collect(),
                None => table.numeric(&sc.source)?.ok_or_else(|| {
                    EdfError::Config(format!("sensitive column `{}` must be numeric", sc.source))
                })?,
            };
            cols.push(sc.clone());
            values.push(v);
        }
        return Ok((columns_to_matrix(n, &values), cols));
    }
    for name in names {
        match table.numeric(name)? {
            Some(v) => {
                let kind = if v.iter().all(|&x| x == 0.0 || x == 1.0) {
                    SensitiveKind::Binary
                } else {
                    SensitiveKind::Continuous
                };
                cols.push(SensitiveColumn {
                    name: name.clone(),
                    kind,
                    source: name.clone(),
                    category: None,
                });
                values.push(v);
            }
            None => {
                let cells = table.cells(name)?;
                let levels: Vec<&str> = cells.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
                if levels.len() < 2 {
                    return Err(EdfError::DegenerateSensitive(name.clone()));
                }
                let chosen: Vec<&str> = if levels.len() == 2 {
                    vec![levels[1]]
                } else {
                    levels
                };
                for level in chosen {
                    cols.push(SensitiveColumn {
                        name: format!("{name}.{level}"),
                        kind: SensitiveKind::Binary,
                        source: name.clone(),
                        category: Some(level.to_string()),
                    });
                    values.push(cells.iter().map(|c| f64::from(*c == level)).collect());
                }
            }
        }
    }
    Ok((columns_to_matrix(n, &values), cols))
}
