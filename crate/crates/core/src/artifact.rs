//! Single-model fits saved as JSON artifacts.
//!
//! An artifact stores everything needed to encode new rows the way the
//! training data was encoded. k-NN models keep no training rows in the
//! file; they are reloaded from the recorded CSV path, whose SHA-256 must
//! still match.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{EdfError, Result};
use crate::model::{DeweightValue, FittedModel, ModelFamily, Predictor};
use crate::tabular::{
    encode_features, encode_sensitive, file_sha256, load_csv, DataSpec, Dataset, FeatureSchema,
    OutcomeEncoding, OutcomeKind, SensitiveColumn, Standardization, Table,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub data: DataSpec,
    pub model: ModelFamily,
    /// Defaults to no deweighting: 0 for the ridge families, factor 1 for
    /// k-NN and forests.
    #[serde(default)]
    pub deweight: Option<DeweightValue>,
    #[serde(default)]
    pub seed: u64,
}

impl FitConfig {
    pub fn deweight_value(&self) -> DeweightValue {
        self.deweight.clone().unwrap_or(match self.model {
            ModelFamily::LinearEdf { .. } | ModelFamily::Twostage { .. } => DeweightValue::Common(0.0),
            ModelFamily::Knn { .. } | ModelFamily::Forest { .. } => DeweightValue::Common(1.0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub data: DataSpec,
    pub data_sha256: String,
    pub schema: FeatureSchema,
    pub standardization: Standardization,
    pub outcome: OutcomeEncoding,
    pub sensitive: Vec<SensitiveColumn>,
    pub c_mask: Vec<bool>,
    pub deweight: DeweightValue,
    pub seed: u64,
    pub model: FittedModel,
}

impl ModelArtifact {
    /// Fits on every row of the configured CSV file.
    pub fn fit(config: &FitConfig) -> Result<Self> {
        let data = load_csv(&config.data)?;
        let data_sha256 = file_sha256(&config.data.path)?;
        let deweight = config.deweight_value();
        let model = config.model.fit(&data, &deweight, config.seed)?;
        Ok(ModelArtifact {
            format_version: FORMAT_VERSION,
            data: config.data.clone(),
            data_sha256,
            schema: data.schema().clone(),
            standardization: data.standardization().clone(),
            outcome: data.outcome().clone(),
            sensitive: data.sensitive().to_vec(),
            c_mask: data.c_mask().to_vec(),
            deweight,
            seed: config.seed,
            model,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|source| EdfError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Parses an artifact and, for k-NN, reattaches the training rows.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut artifact: ModelArtifact = serde_json::from_str(text)?;
        if artifact.format_version != FORMAT_VERSION {
            return Err(EdfError::Config(format!(
                "unsupported artifact format version {}",
                artifact.format_version
            )));
        }
        if let FittedModel::Knn(knn) = &artifact.model {
            let train = artifact.training_data()?;
            let restored = knn.clone().with_training_data(train.x().to_owned(), train.y().to_owned())?;
            artifact.model = FittedModel::Knn(restored);
        }
        Ok(artifact)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| EdfError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Reloads the training CSV after checking its hash.
    pub fn training_data(&self) -> Result<Dataset> {
        let found = file_sha256(&self.data.path)?;
        if found != self.data_sha256 {
            return Err(EdfError::DataHashMismatch {
                path: self.data.path.clone(),
                expected: self.data_sha256.clone(),
                found,
            });
        }
        load_csv(&self.data)
    }

    /// Standardized features and sensitive matrix for new rows. S is only
    /// decoded when the model reads it.
    pub fn encode(&self, table: &Table) -> Result<(Array2<f64>, Array2<f64>)> {
        let x = self.standardization.apply(encode_features(table, &self.schema)?.view())?;
        let s = match &self.model {
            FittedModel::Twostage(_) => encode_sensitive(table, &self.sensitive)?,
            _ => Array2::zeros((table.n_rows(), 0)),
        };
        Ok((x, s))
    }

    /// `P(Y = 1 | X)` for binary outcomes, predictions otherwise.
    pub fn predict_table(&self, table: &Table) -> Result<Array1<f64>> {
        let (x, s) = self.encode(table)?;
        match self.outcome.kind {
            OutcomeKind::Continuous => self.model.predict_mean(x.view(), s.view()),
            OutcomeKind::Binary => self.model.predict_positive(x.view(), s.view()),
        }
    }
}
