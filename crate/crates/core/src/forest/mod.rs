//! Random forests whose split-candidate sampling is deweighted for proxy
//! features.
//!
//! At every node `mtry` candidate features are drawn without replacement,
//! each draw proportional to the remaining sampling weights. A proxy feature
//! with weight 0 is never a candidate and so never splits. Trees are grown
//! in parallel; each uses its own ChaCha stream keyed by the tree index, so
//! the forest does not depend on thread count or scheduling.

mod tree;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use tree::{LeafValue, Node, Tree};

use crate::error::{EdfError, Result};
use crate::tabular::{Dataset, DeweightSpec, OutcomeKind};

pub const DEFAULT_TREES: usize = 500;
pub const DEFAULT_MIN_NODE_SIZE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Nodes holding this many samples or fewer become leaves.
    pub min_node_size: usize,
    /// Candidate features per node; `None` means `⌈√p⌉`.
    #[serde(default)]
    pub mtry: Option<usize>,
    pub sampling_weights: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub bootstrap: bool,
}

fn default_true() -> bool {
    true
}

impl ForestConfig {
    /// Defaults with unit weights for `p` features.
    pub fn new(p: usize, seed: u64) -> Self {
        ForestConfig {
            n_trees: DEFAULT_TREES,
            min_node_size: DEFAULT_MIN_NODE_SIZE,
            mtry: None,
            sampling_weights: vec![1.0; p],
            seed,
            bootstrap: true,
        }
    }

    /// Defaults with sampling weights taken from the deweighting factors.
    pub fn from_spec(spec: &DeweightSpec, seed: u64) -> Self {
        ForestConfig {
            sampling_weights: spec.factor.clone(),
            ..ForestConfig::new(spec.len(), seed)
        }
    }

    pub fn effective_mtry(&self) -> usize {
        let p = self.sampling_weights.len();
        self.mtry.unwrap_or_else(|| (p as f64).sqrt().ceil() as usize).max(1)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.sampling_weights.len() != p {
            return Err(EdfError::DimensionMismatch {
                expected: p,
                found: self.sampling_weights.len(),
            });
        }
        if self.n_trees == 0 {
            return Err(EdfError::InvalidParameter("n_trees must be positive".into()));
        }
        if self.min_node_size == 0 {
            return Err(EdfError::InvalidParameter("min_node_size must be positive".into()));
        }
        let mtry = self.effective_mtry();
        if mtry > p {
            return Err(EdfError::InvalidParameter(format!("mtry = {mtry} exceeds p = {p}")));
        }
        if self
            .sampling_weights
            .iter()
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(EdfError::InvalidParameter(
                "sampling weights must be finite and nonnegative".into(),
            ));
        }
        if self.sampling_weights.iter().all(|&w| w == 0.0) {
            return Err(EdfError::InvalidParameter(
                "at least one sampling weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub y_kind: OutcomeKind,
    pub config: ForestConfig,
    pub n_features: usize,
    /// Out-of-bag misclassification rate (classification) or mean squared
    /// error (regression); absent without bootstrap or when no row was ever
    /// out of bag.
    pub oob_error: Option<f64>,
}

pub fn forest_fit(train: &Dataset, config: &ForestConfig) -> Result<ForestModel> {
    forest_fit_arrays(train.x(), train.y(), train.y_kind(), config)
}

pub fn forest_fit_arrays(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    y_kind: OutcomeKind,
    config: &ForestConfig,
) -> Result<ForestModel> {
    let (n, p) = x.dim();
    config.validate(p)?;
    if y.len() != n {
        return Err(EdfError::LengthMismatch { left: n, right: y.len() });
    }
    if n == 0 || n < config.min_node_size {
        return Err(EdfError::TooFewValues {
            needed: config.min_node_size.max(1),
            found: n,
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(EdfError::NonFinite {
            column: "y".into(),
            row: y.iter().position(|v| !v.is_finite()).unwrap_or(0),
        });
    }
    let n_classes = match y_kind {
        OutcomeKind::Continuous => None,
        OutcomeKind::Binary => {
            if y.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(EdfError::InvalidParameter("binary outcome must be 0/1".into()));
            }
            if y.iter().all(|&v| v == y[0]) {
                return Err(EdfError::InvalidParameter(
                    "degenerate outcome: a single class is present".into(),
                ));
            }
            Some(2)
        }
    };
    let y_owned = y.to_owned();
    let params = tree::GrowParams {
        min_node_size: config.min_node_size,
        mtry: config.effective_mtry(),
        weights: &config.sampling_weights,
        n_classes,
    };

    let grown: Vec<(Tree, Vec<bool>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(config.seed, t);
            let mut in_bag = vec![false; n];
            let samples: Vec<usize> = if config.bootstrap {
                (0..n)
                    .map(|_| {
                        let i = rng.random_range(0..n);
                        in_bag[i] = true;
                        i
                    })
                    .collect()
            } else {
                in_bag.iter_mut().for_each(|b| *b = true);
                (0..n).collect()
            };
            (tree::grow(x, &y_owned, samples, &params, &mut rng), in_bag)
        })
        .collect();

    let oob_error = if config.bootstrap {
        oob_error(x, y, y_kind, &grown)
    } else {
        None
    };
    Ok(ForestModel {
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        y_kind,
        config: config.clone(),
        n_features: p,
        oob_error,
    })
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn leaf_estimate(leaf: &LeafValue) -> f64 {
    match leaf {
        LeafValue::Mean(m) => *m,
        LeafValue::Counts(c) => {
            let total: u32 = c.iter().sum();
            c.get(1).copied().unwrap_or(0) as f64 / total as f64
        }
    }
}

fn oob_error(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    y_kind: OutcomeKind,
    grown: &[(Tree, Vec<bool>)],
) -> Option<f64> {
    let mut total = 0.0;
    let mut rows = 0usize;
    for (i, row) in x.axis_iter(Axis(0)).enumerate() {
        let (mut sum, mut count) = (0.0, 0usize);
        for (tree, in_bag) in grown {
            if !in_bag[i] {
                sum += leaf_estimate(tree.leaf(row));
                count += 1;
            }
        }
        if count == 0 {
            continue;
        }
        let est = sum / count as f64;
        total += match y_kind {
            OutcomeKind::Binary => f64::from(f64::from(est >= 0.5) != y[i]),
            OutcomeKind::Continuous => (est - y[i]) * (est - y[i]),
        };
        rows += 1;
    }
    (rows > 0).then(|| total / rows as f64)
}

impl ForestModel {
    /// Wraps hand-built trees, e.g. for inspection or tests.
    pub fn from_trees(trees: Vec<Tree>, y_kind: OutcomeKind, config: ForestConfig) -> Result<Self> {
        let p = config.sampling_weights.len();
        if trees.is_empty() {
            return Err(EdfError::EmptyInput);
        }
        for t in &trees {
            if t.max_feature().is_some_and(|f| f >= p) {
                return Err(EdfError::DimensionMismatch {
                    expected: p,
                    found: t.max_feature().unwrap_or(0) + 1,
                });
            }
            for node in t.nodes() {
                let ok = matches!(
                    (y_kind, node),
                    (_, Node::Split { .. })
                        | (OutcomeKind::Continuous, Node::Leaf { value: LeafValue::Mean(_) })
                        | (OutcomeKind::Binary, Node::Leaf { value: LeafValue::Counts(_) })
                );
                if !ok {
                    return Err(EdfError::InvalidParameter(
                        "leaf type does not match the outcome kind".into(),
                    ));
                }
            }
        }
        Ok(ForestModel {
            trees,
            y_kind,
            config,
            n_features: p,
            oob_error: None,
        })
    }

    fn check_dims(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.n_features {
            return Err(EdfError::DimensionMismatch {
                expected: self.n_features,
                found: x.ncols(),
            });
        }
        Ok(())
    }

    /// Mean of the per-tree leaf means (regression) or of the per-tree
    /// positive-class frequencies (classification).
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_dims(x)?;
        let rows: Vec<ArrayView1<f64>> = x.axis_iter(Axis(0)).collect();
        let k = self.trees.len() as f64;
        let out: Vec<f64> = rows
            .par_iter()
            .map(|row| self.trees.iter().map(|t| leaf_estimate(t.leaf(*row))).sum::<f64>() / k)
            .collect();
        Ok(Array1::from(out))
    }

    /// Averaged per-tree class frequencies, one row `[P(0), P(1)]` per query.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if self.y_kind != OutcomeKind::Binary {
            return Err(EdfError::NoProbabilityOutput);
        }
        self.check_dims(x)?;
        let rows: Vec<ArrayView1<f64>> = x.axis_iter(Axis(0)).collect();
        let k = self.trees.len() as f64;
        let probs: Vec<[f64; 2]> = rows
            .par_iter()
            .map(|row| {
                let mut acc = [0.0; 2];
                for t in &self.trees {
                    if let LeafValue::Counts(c) = t.leaf(*row) {
                        let total: u32 = c.iter().sum();
                        acc[0] += c[0] as f64 / total as f64;
                        acc[1] += c.get(1).copied().unwrap_or(0) as f64 / total as f64;
                    }
                }
                [acc[0] / k, acc[1] / k]
            })
            .collect();
        let mut out = Array2::zeros((probs.len(), 2));
        for (i, p) in probs.iter().enumerate() {
            out[[i, 0]] = p[0];
            out[[i, 1]] = p[1];
        }
        Ok(out)
    }

    /// Number of split nodes using each feature, over the whole forest.
    pub fn split_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_features];
        for t in &self.trees {
            for f in t.split_features() {
                counts[f] += 1;
            }
        }
        counts
    }
}
