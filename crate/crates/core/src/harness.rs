//! Replicated random-holdout experiments over a deweighting grid.
//!
//! Every (grid value, replication) pair is an independent unit: split with
//! the replication seed, fit on the training part, evaluate on the holdout.
//! Replication seeds depend only on the master seed and the replication
//! index, so all grid values see the same holdout sets. Results are reduced
//! by index, which keeps tables identical across thread counts.

use std::fmt::Write as _;
use std::io::Write;

use ndarray::{concatenate, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EdfError, Result};
use crate::fairness::{self, proxy_adequacy, render_table, rho_headers, AuxFamily, UtilityMetric};
use crate::knn::KnnModel;
use crate::model::{DeweightValue, FittedModel, ModelFamily, Predictor};
use crate::stats;
use crate::tabular::{load_csv, split_holdout, DataSpec, Dataset, SensitiveKind};

fn default_holdout() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    pub model: ModelFamily,
    pub deweight_grid: Vec<DeweightValue>,
    pub replications: usize,
    #[serde(default = "default_holdout")]
    pub holdout_size: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub aux: AuxFamily,
    /// For k-NN runs: also correlate the EDF fit with a k-NN fit that sees S.
    #[serde(default)]
    pub proxy_adequacy: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.deweight_grid.is_empty() {
            return Err(EdfError::Config("deweight_grid must not be empty".into()));
        }
        if self.replications == 0 {
            return Err(EdfError::Config("replications must be at least 1".into()));
        }
        if self.holdout_size == 0 {
            return Err(EdfError::Config("holdout_size must be positive".into()));
        }
        for v in &self.deweight_grid {
            self.model.validate_value(v)?;
        }
        if self.proxy_adequacy && !matches!(self.model, ModelFamily::Knn { .. }) {
            return Err(EdfError::Config(
                "proxy_adequacy is only available for the knn family".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

/// Seed for replication `r`, shared by every grid value.
pub fn replication_seed(master_seed: u64, replication: usize) -> u64 {
    splitmix64(master_seed ^ splitmix64(replication as u64))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One (grid value, replication) outcome, persisted as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub grid_index: usize,
    pub deweight: DeweightValue,
    pub replication: usize,
    pub seed: u64,
    pub utility_metric: UtilityMetric,
    pub utility: f64,
    pub categories: Vec<String>,
    pub rho_squared: Vec<f64>,
    pub n_eval: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proxy_adequacy: Option<Vec<fairness::CategoryRho>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub deweight: DeweightValue,
    pub mean_utility: f64,
    pub se_utility: f64,
    pub mean_rho_squared: Vec<f64>,
    pub se_rho_squared: Vec<f64>,
    pub n_replications: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_proxy_adequacy: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationTable {
    pub family: String,
    pub utility_metric: UtilityMetric,
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proxy_categories: Option<Vec<String>>,
    pub holdout_size: usize,
    pub master_seed: u64,
    /// ρ² is computed on the holdout rows.
    pub evaluated_on: String,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub table: ReplicationTable,
    pub records: Vec<ReplicationRecord>,
}

impl ExperimentOutcome {
    pub fn write_records<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            let line = serde_json::to_string(r)?;
            writeln!(out, "{line}").map_err(|e| EdfError::Io {
                path: "<records>".into(),
                source: e,
            })?;
        }
        Ok(())
    }
}

pub fn run_experiment(config: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentOutcome> {
    config.validate()?;
    let data = load_csv(&config.data)?;
    run_on_dataset(&data, config, opts)
}

/// Runs the grid on an already-loaded dataset; `config.data` is ignored.
pub fn run_on_dataset(data: &Dataset, config: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentOutcome> {
    config.validate()?;
    if data.n_sensitive() == 0 {
        return Err(EdfError::Config("at least one sensitive column is required".into()));
    }
    if config.holdout_size >= data.n_rows() {
        return Err(EdfError::HoldoutTooLarge {
            holdout: config.holdout_size,
            n: data.n_rows(),
        });
    }
    let units: Vec<(usize, usize)> = (0..config.deweight_grid.len())
        .flat_map(|g| (0..config.replications).map(move |r| (g, r)))
        .collect();
    let work = || -> Vec<Result<ReplicationRecord>> {
        units
            .par_iter()
            .map(|&(g, r)| {
                run_unit(data, config, g, r).map_err(|e| EdfError::Replication {
                    grid_value: config.deweight_grid[g].to_string(),
                    replication: r,
                    source: Box::new(e),
                })
            })
            .collect()
    };
    let results = match opts.threads {
        None => work(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| EdfError::Config(format!("cannot build thread pool: {e}")))?
            .install(work),
    };
    let records: Vec<ReplicationRecord> = results.into_iter().collect::<Result<_>>()?;
    let table = aggregate(config, &records)?;
    Ok(ExperimentOutcome { table, records })
}

fn run_unit(data: &Dataset, config: &ExperimentConfig, g: usize, r: usize) -> Result<ReplicationRecord> {
    let seed = replication_seed(config.master_seed, r);
    let (train, test) = split_holdout(data, config.holdout_size, seed)?;
    let value = &config.deweight_grid[g];
    let model = config.model.fit(&train, value, splitmix64(seed))?;
    let report = fairness::evaluate(&model, &train, &test, config.aux)?;
    let proxy = if config.proxy_adequacy {
        Some(knn_proxy_adequacy(&model, &train, &test)?)
    } else {
        None
    };
    Ok(ReplicationRecord {
        grid_index: g,
        deweight: value.clone(),
        replication: r,
        seed,
        utility_metric: report.utility.metric,
        utility: report.utility.value,
        categories: report.categories(),
        rho_squared: report.per_category.iter().map(|c| c.rho_squared).collect(),
        n_eval: report.n_eval,
        proxy_adequacy: proxy,
    })
}

/// Per-level ρ² between the EDF k-NN fit and a k-NN fit with the same k on
/// `[X, S]`, evaluated on the holdout rows, for every indicator column of S.
pub fn knn_proxy_adequacy(
    edf: &FittedModel,
    train: &Dataset,
    eval: &Dataset,
) -> Result<Vec<fairness::CategoryRho>> {
    let FittedModel::Knn(edf_knn) = edf else {
        return Err(EdfError::Config("proxy adequacy needs a knn model".into()));
    };
    let full = KnnModel::from_parts(
        concatenate![Axis(1), train.x(), train.s()],
        train.y().to_owned(),
        vec![1.0; train.n_features() + train.n_sensitive()],
        edf_knn.k,
        train.y_kind(),
    )?;
    let full_fit = full.predict(concatenate![Axis(1), eval.x(), eval.s()].view())?;
    let edf_fit = edf.predict_mean(eval.x(), eval.s())?;
    let mut out = Vec::new();
    for (j, col) in eval.sensitive().iter().enumerate() {
        if col.kind == SensitiveKind::Binary {
            out.extend(proxy_adequacy(
                full_fit.view(),
                edf_fit.view(),
                eval.s().column(j),
                &col.name,
            )?);
        }
    }
    Ok(out)
}

/// Means and standard errors per grid value from the raw records.
pub fn aggregate(config: &ExperimentConfig, records: &[ReplicationRecord]) -> Result<ReplicationTable> {
    let first = records.first().ok_or(EdfError::EmptyInput)?;
    let categories = first.categories.clone();
    let proxy_categories = first
        .proxy_adequacy
        .as_ref()
        .map(|v| v.iter().map(|c| c.category.clone()).collect::<Vec<_>>());
    let mut rows = Vec::with_capacity(config.deweight_grid.len());
    for (g, value) in config.deweight_grid.iter().enumerate() {
        let mut group: Vec<&ReplicationRecord> = records.iter().filter(|r| r.grid_index == g).collect();
        group.sort_by_key(|r| r.replication);
        let utility: Vec<f64> = group.iter().map(|r| r.utility).collect();
        let mut mean_rho = Vec::with_capacity(categories.len());
        let mut se_rho = Vec::with_capacity(categories.len());
        for j in 0..categories.len() {
            let v: Vec<f64> = group.iter().map(|r| r.rho_squared[j]).collect();
            mean_rho.push(stats::mean(&v));
            se_rho.push(stats::standard_error(&v));
        }
        let mean_proxy = proxy_categories.as_ref().map(|cats| {
            (0..cats.len())
                .map(|j| {
                    let v: Vec<f64> = group
                        .iter()
                        .filter_map(|r| r.proxy_adequacy.as_ref().map(|p| p[j].rho_squared))
                        .collect();
                    stats::mean(&v)
                })
                .collect()
        });
        rows.push(TableRow {
            deweight: value.clone(),
            mean_utility: stats::mean(&utility),
            se_utility: stats::standard_error(&utility),
            mean_rho_squared: mean_rho,
            se_rho_squared: se_rho,
            n_replications: group.len(),
            mean_proxy_adequacy: mean_proxy,
        });
    }
    Ok(ReplicationTable {
        family: config.model.name().to_string(),
        utility_metric: first.utility_metric,
        categories,
        proxy_categories,
        holdout_size: config.holdout_size,
        master_seed: config.master_seed,
        evaluated_on: "holdout".into(),
        rows,
    })
}

impl ReplicationTable {
    /// Fixed-width table: deweight, mean utility, mean ρ² per category and,
    /// when computed, mean proxy adequacy per level.
    pub fn to_text(&self) -> String {
        let mut header = vec!["deweight".to_string(), self.utility_metric.label().to_string()];
        header.extend(rho_headers(&self.categories));
        if let Some(pc) = &self.proxy_categories {
            header.extend(pc.iter().map(|c| format!("{c} rho^2")));
        }
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| {
                let mut cells = vec![row.deweight.to_string(), self.utility_metric.format(row.mean_utility)];
                cells.extend(row.mean_rho_squared.iter().map(|v| format!("{v:.4}")));
                if let Some(p) = &row.mean_proxy_adequacy {
                    cells.extend(p.iter().map(|v| format!("{v:.4}")));
                }
                cells
            })
            .collect();
        render_table(&header, &rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Short summary of standard errors, reported alongside the main table.
    pub fn standard_error_text(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let se: Vec<String> = row.se_rho_squared.iter().map(|v| format!("{v:.4}")).collect();
            let _ = writeln!(
                out,
                "{}: se({}) = {}, se(rho^2) = {}, n = {}",
                row.deweight,
                self.utility_metric.label(),
                self.utility_metric.format(row.se_utility),
                se.join("/"),
                row.n_replications
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub index: usize,
    pub deweight: DeweightValue,
    /// False when no row met the cap and the lowest-ρ² row was returned.
    pub feasible: bool,
}

/// Best-utility row among those whose largest mean ρ² is within `cap`;
/// otherwise the row with the lowest such ρ², flagged infeasible.
pub fn select_deweight(table: &ReplicationTable, cap: f64) -> Option<Selection> {
    let worst = |row: &TableRow| row.mean_rho_squared.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best_feasible = table
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| worst(r) <= cap)
        .min_by(|a, b| a.1.mean_utility.total_cmp(&b.1.mean_utility));
    if let Some((index, row)) = best_feasible {
        return Some(Selection {
            index,
            deweight: row.deweight.clone(),
            feasible: true,
        });
    }
    table
        .rows
        .iter()
        .enumerate()
        .min_by(|a, b| worst(a.1).total_cmp(&worst(b.1)))
        .map(|(index, row)| Selection {
            index,
            deweight: row.deweight.clone(),
            feasible: false,
        })
}
