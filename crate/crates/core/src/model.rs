//! Uniform access to the model families used by the harness and CLI.

use std::fmt;

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{EdfError, Result};
use crate::forest::{forest_fit, ForestConfig, ForestModel, DEFAULT_MIN_NODE_SIZE, DEFAULT_TREES};
use crate::knn::{knn_fit, KnnModel, DEFAULT_K};
use crate::linear::{fit_augmented, fit_closed_form, FitMethod, RidgeDeweightModel};
use crate::tabular::{Dataset, DeweightSpec};
use crate::twostage::{fit_twostage, TwoStageModel};

/// A fitted model that estimates `E(Y | X)`.
///
/// `s` is only read by the two-stage baseline; the deweighted models never
/// look at the sensitive attributes.
pub trait Predictor {
    fn predict_mean(&self, x: ArrayView2<f64>, s: ArrayView2<f64>) -> Result<Array1<f64>>;

    /// Estimated `P(Y = 1 | X)`.
    fn predict_positive(&self, _x: ArrayView2<f64>, _s: ArrayView2<f64>) -> Result<Array1<f64>> {
        Err(EdfError::NoProbabilityOutput)
    }
}

impl Predictor for RidgeDeweightModel {
    fn predict_mean(&self, x: ArrayView2<f64>, _s: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.predict(x)
    }

    /// Linear-probability reading of the fit, clipped to [0, 1].
    fn predict_positive(&self, x: ArrayView2<f64>, _s: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.predict(x)?.mapv(|v| v.clamp(0.0, 1.0)))
    }
}

impl Predictor for KnnModel {
    fn predict_mean(&self, x: ArrayView2<f64>, _s: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.predict(x)
    }

    fn predict_positive(&self, x: ArrayView2<f64>, _s: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.predict_proba(x)?.column(1).to_owned())
    }
}

impl Predictor for ForestModel {
    fn predict_mean(&self, x: ArrayView2<f64>, _s: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.predict(x)
    }

    fn predict_positive(&self, x: ArrayView2<f64>, _s: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.predict_proba(x)?.column(1).to_owned())
    }
}

/// Two-stage model together with its prediction-time treatment of S.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStagePredictor {
    pub model: TwoStageModel,
    #[serde(default)]
    pub include_sensitive: bool,
}

impl Predictor for TwoStagePredictor {
    fn predict_mean(&self, x: ArrayView2<f64>, s: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.model.predict(x, s, self.include_sensitive)
    }

    fn predict_positive(&self, x: ArrayView2<f64>, s: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.predict_mean(x, s)?.mapv(|v| v.clamp(0.0, 1.0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FittedModel {
    LinearEdf(RidgeDeweightModel),
    Twostage(TwoStagePredictor),
    Knn(KnnModel),
    Forest(ForestModel),
}

impl FittedModel {
    pub fn as_predictor(&self) -> &dyn Predictor {
        match self {
            FittedModel::LinearEdf(m) => m,
            FittedModel::Twostage(m) => m,
            FittedModel::Knn(m) => m,
            FittedModel::Forest(m) => m,
        }
    }
}

impl Predictor for FittedModel {
    fn predict_mean(&self, x: ArrayView2<f64>, s: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.as_predictor().predict_mean(x, s)
    }

    fn predict_positive(&self, x: ArrayView2<f64>, s: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.as_predictor().predict_positive(x, s)
    }
}

/// One deweighting setting: a value shared by every proxy feature, or one
/// value per proxy column in column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeweightValue {
    Common(f64),
    PerFeature(Vec<f64>),
}

impl fmt::Display for DeweightValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeweightValue::Common(v) => write!(f, "{v:.2}"),
            DeweightValue::PerFeature(vs) => {
                let parts: Vec<String> = vs.iter().map(|v| format!("{v:.2}")).collect();
                write!(f, "{}", parts.join("/"))
            }
        }
    }
}

impl DeweightValue {
    fn values(&self) -> &[f64] {
        match self {
            DeweightValue::Common(v) => std::slice::from_ref(v),
            DeweightValue::PerFeature(v) => v,
        }
    }
}

fn default_k() -> usize {
    DEFAULT_K
}
fn default_trees() -> usize {
    DEFAULT_TREES
}
fn default_min_node() -> usize {
    DEFAULT_MIN_NODE_SIZE
}
fn default_true() -> bool {
    true
}
fn default_method() -> FitMethod {
    FitMethod::ClosedForm
}

/// Model family and its non-deweighting hyperparameters.
///
/// The deweighting value means `δ = d²` for `linear-edf`, a factor in
/// [0, 1] for `knn` and `forest`, and the ridge penalty λ on the sensitive
/// coefficients for `twostage`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelFamily {
    LinearEdf {
        #[serde(default = "default_method")]
        method: FitMethod,
    },
    Twostage {
        #[serde(default)]
        include_sensitive: bool,
    },
    Knn {
        #[serde(default = "default_k")]
        k: usize,
    },
    Forest {
        #[serde(default = "default_trees")]
        n_trees: usize,
        #[serde(default = "default_min_node")]
        min_node_size: usize,
        #[serde(default)]
        mtry: Option<usize>,
        #[serde(default = "default_true")]
        bootstrap: bool,
    },
}

impl ModelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::LinearEdf { .. } => "linear-edf",
            ModelFamily::Twostage { .. } => "twostage",
            ModelFamily::Knn { .. } => "knn",
            ModelFamily::Forest { .. } => "forest",
        }
    }

    /// Checks a deweighting value without data.
    pub fn validate_value(&self, value: &DeweightValue) -> Result<()> {
        let vals = value.values();
        if vals.is_empty() {
            return Err(EdfError::Config("empty per-feature deweighting list".into()));
        }
        match self {
            ModelFamily::LinearEdf { .. } => {
                if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(EdfError::Config(format!(
                        "linear deweighting values must be >= 0, got {value}"
                    )));
                }
            }
            ModelFamily::Twostage { .. } => {
                if !matches!(value, DeweightValue::Common(v) if v.is_finite() && *v >= 0.0) {
                    return Err(EdfError::Config(format!(
                        "twostage grid values are scalar lambda >= 0, got {value}"
                    )));
                }
            }
            ModelFamily::Knn { .. } | ModelFamily::Forest { .. } => {
                if vals.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
                    return Err(EdfError::Config(format!(
                        "deweight factors must lie in [0, 1], got {value}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn deweight_spec(&self, c_mask: &[bool], value: &DeweightValue) -> Result<DeweightSpec> {
        self.validate_value(value)?;
        match (self, value) {
            (ModelFamily::LinearEdf { .. }, DeweightValue::Common(v)) => DeweightSpec::common_ridge(c_mask, *v),
            (ModelFamily::LinearEdf { .. }, DeweightValue::PerFeature(v)) => DeweightSpec::ridge_deltas(c_mask, v),
            (ModelFamily::Twostage { .. }, _) => Ok(DeweightSpec::none(c_mask.len())),
            (_, DeweightValue::Common(v)) => DeweightSpec::common_factor(c_mask, *v),
            (_, DeweightValue::PerFeature(v)) => DeweightSpec::factors(c_mask, v),
        }
    }

    pub fn fit(&self, train: &Dataset, value: &DeweightValue, seed: u64) -> Result<FittedModel> {
        let spec = self.deweight_spec(train.c_mask(), value)?;
        Ok(match self {
            ModelFamily::LinearEdf { method } => FittedModel::LinearEdf(match method {
                FitMethod::ClosedForm => fit_closed_form(train, &spec)?,
                FitMethod::Augmented => fit_augmented(train, &spec)?,
            }),
            ModelFamily::Twostage { include_sensitive } => {
                let lambda = value.values()[0];
                FittedModel::Twostage(TwoStagePredictor {
                    model: fit_twostage(train, lambda)?,
                    include_sensitive: *include_sensitive,
                })
            }
            ModelFamily::Knn { k } => FittedModel::Knn(knn_fit(train, &spec, *k)?),
            ModelFamily::Forest {
                n_trees,
                min_node_size,
                mtry,
                bootstrap,
            } => {
                let config = ForestConfig {
                    n_trees: *n_trees,
                    min_node_size: *min_node_size,
                    mtry: *mtry,
                    sampling_weights: spec.factor.clone(),
                    seed,
                    bootstrap: *bootstrap,
                };
                FittedModel::Forest(forest_fit(train, &config)?)
            }
        })
    }
}
