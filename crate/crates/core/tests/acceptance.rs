//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.
//!
//! The external-data check reads CSV files from the directory named by
//! `EDF_EXTERNAL_DATA` (`pef.csv`, `compas.csv`, `mortgage.csv`) and skips
//! any that are absent.

mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use common::*;
use edf_core::fairness::{rho_squared, AuxFamily};
use edf_core::forest::{forest_fit, ForestConfig};
use edf_core::harness::{run_experiment, run_on_dataset, ExperimentConfig, RunOptions};
use edf_core::knn::{knn_fit, KnnModel};
use edf_core::linear::{fit_augmented_arrays, fit_closed_form_arrays, FitMethod};
use edf_core::stats;
use edf_core::tabular::{ColumnRoles, DataSpec, Dataset, DeweightSpec, OutcomeKind};
use edf_core::twostage::fit_twostage_arrays;
use edf_core::{DeweightValue, ModelFamily};
use ndarray::{Array1, Axis};
use rand::Rng;

#[test]
fn ridge_routes_agree() {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let n = r.random_range(20..=200);
        let p = r.random_range(1..=10);
        let x = gaussian(&mut r, n, p);
        let y = gaussian_vec(&mut r, n);
        let d = Array1::from_shape_fn(p, |_| {
            if r.random_bool(0.3) {
                0.0
            } else {
                10f64.powf(r.random_range(-2.0..3.0))
            }
        });
        let a = fit_closed_form_arrays(x.view(), y.view(), d.view()).unwrap();
        let b = fit_augmented_arrays(x.view(), y.view(), d.view()).unwrap();
        worst = worst.max(rel_diff(a.coefficients.as_slice().unwrap(), b.coefficients.as_slice().unwrap()));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = report(
        "ridge-path equivalence",
        worst <= 1e-8 && secs < 10.0,
        &format!("max relative difference {worst:.2e}, {secs:.2} s"),
    );
    assert!(pass);
}

#[test]
fn zero_penalty_is_ols() {
    let mut r = rng(2);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let n = r.random_range(20..=200);
        let p = r.random_range(1..=10);
        let x = gaussian(&mut r, n, p).mapv(|v| 3.0 * v + 1.5);
        let y = gaussian_vec(&mut r, n).mapv(|v| 10.0 * v + 4.0);
        let (b0, b) = ols_oracle(&x, &y);
        let mut oracle = vec![b0];
        oracle.extend(&b);
        let d = Array1::zeros(p);
        for m in [
            fit_closed_form_arrays(x.view(), y.view(), d.view()).unwrap(),
            fit_augmented_arrays(x.view(), y.view(), d.view()).unwrap(),
        ] {
            let mut got = vec![m.intercept];
            got.extend(m.coefficients.iter());
            worst = worst.max(rel_diff(&oracle, &got));
        }
    }
    let pass = report(
        "OLS reduction",
        worst <= 1e-10,
        &format!("max relative difference {worst:.2e}"),
    );
    assert!(pass);
}

#[test]
fn twostage_predictions_orthogonal_to_s() {
    let mut r = rng(3);
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let n = r.random_range(30..=300);
        let p = r.random_range(1..=6);
        let q = r.random_range(1..=3);
        let s = gaussian(&mut r, n, q);
        let mix = gaussian(&mut r, q, p);
        let x = s.dot(&mix) + gaussian(&mut r, n, p);
        let y = x.sum_axis(Axis(1)) + s.sum_axis(Axis(1)) + gaussian_vec(&mut r, n);
        let lambda = r.random_range(0.0..10.0);
        let m = fit_twostage_arrays(x.view(), s.view(), y.view(), lambda).unwrap();
        let yhat = m.predict_sfree(x.view(), s.view()).unwrap().to_vec();
        for j in 0..q {
            let c = stats::sample_covariance(&yhat, &s.column(j).to_vec());
            worst = worst.max(c.abs());
        }
    }
    let pass = report(
        "two-stage orthogonality",
        worst <= 1e-8,
        &format!("max |cov(yhat, s_j)| {worst:.2e}"),
    );
    assert!(pass);
}

#[test]
fn linear_tradeoff_on_proxy_fixture() {
    let start = Instant::now();
    let data = proxy_fixture(3000, 4);
    let config = ExperimentConfig {
        data: dummy_spec(),
        model: ModelFamily::LinearEdf {
            method: FitMethod::ClosedForm,
        },
        deweight_grid: vec![DeweightValue::Common(0.0), DeweightValue::Common(1e6)],
        replications: 100,
        holdout_size: 1000,
        master_seed: 2024,
        aux: AuxFamily::default(),
        proxy_adequacy: false,
    };
    let out = run_on_dataset(&data, &config, RunOptions::default()).unwrap();
    let (lo, hi) = (&out.table.rows[0], &out.table.rows[1]);
    let drop = lo.mean_rho_squared[0] - hi.mean_rho_squared[0];
    let se = lo.se_rho_squared[0].hypot(hi.se_rho_squared[0]);
    let degrade = hi.mean_utility / lo.mean_utility - 1.0;
    let secs = start.elapsed().as_secs_f64();
    let pass = report(
        "synthetic linear tradeoff",
        drop >= 3.0 * se && degrade <= 0.25 && secs < 120.0,
        &format!(
            "rho^2 {:.4} -> {:.4} (drop {:.1} se), MAPE {:.4} -> {:.4} ({:+.1}%), {secs:.1} s",
            lo.mean_rho_squared[0],
            hi.mean_rho_squared[0],
            drop / se,
            lo.mean_utility,
            hi.mean_utility,
            100.0 * degrade
        ),
    );
    assert!(pass);
}

#[test]
fn knn_zero_weight_equals_column_deletion() {
    let mut r = rng(5);
    let mut mismatches = 0;
    for case in 0..20 {
        let n = r.random_range(30..=500);
        let p = r.random_range(2..=6);
        let x = gaussian(&mut r, n, p);
        let y = gaussian_vec(&mut r, n);
        let s = gaussian(&mut r, n, 1);
        let mut c_mask = vec![false; p];
        for m in c_mask.iter_mut() {
            *m = r.random_bool(0.4);
        }
        if c_mask.iter().all(|&c| c) {
            c_mask[0] = false;
        }
        if !c_mask.iter().any(|&c| c) {
            c_mask[p - 1] = true;
        }
        let data = Dataset::from_numeric(x, y, s, c_mask.clone()).unwrap();
        let k = r.random_range(1..=25.min(n));
        let spec = DeweightSpec::common_factor(&c_mask, 0.0).unwrap();
        let edf = knn_fit(&data, &spec, k).unwrap();
        let keep: Vec<usize> = (0..p).filter(|&j| !c_mask[j]).collect();
        let reduced = KnnModel::from_parts(
            data.x().select(Axis(1), &keep),
            data.y().to_owned(),
            vec![1.0; keep.len()],
            k,
            OutcomeKind::Continuous,
        )
        .unwrap();
        let queries = gaussian(&mut r, 50, p);
        let a = edf.predict(queries.view()).unwrap();
        let b = reduced.predict(queries.select(Axis(1), &keep).view()).unwrap();
        if a != b {
            mismatches += 1;
            eprintln!("case {case}: predictions differ");
        }
    }
    let pass = report(
        "k-NN exclusion equivalence",
        mismatches == 0,
        &format!("{mismatches} of 20 fixtures differ"),
    );
    assert!(pass);
}

fn forest_fixture(n: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let x = gaussian(&mut r, n, 4);
    let y = Array1::from_shape_fn(n, |i| 2.0 * x[[i, 0]] + x[[i, 1]] + 0.5 * x[[i, 2]] + 0.5 * x[[i, 3]])
        + gaussian_vec(&mut r, n);
    let s = x.column(0).mapv(|v| f64::from(v > 0.0)).insert_axis(Axis(1));
    Dataset::from_numeric(x, y, s, vec![true, false, false, false]).unwrap()
}

#[test]
fn forest_zero_weight_and_monotone_usage() {
    let data = forest_fixture(300, 6);
    let mut config = ForestConfig::new(4, 11);
    config.n_trees = 500;
    config.mtry = Some(2);
    config.sampling_weights = vec![0.0, 1.0, 1.0, 1.0];
    let excluded = forest_fit(&data, &config).unwrap().split_counts();
    config.sampling_weights = vec![1.0; 4];
    let baseline = forest_fit(&data, &config).unwrap().split_counts();
    let exclusion_ok = excluded[0] == 0 && baseline[0] > 0;

    let mut violations = 0;
    for seed in 0..20 {
        let mut shares = Vec::new();
        for factor in [1.0, 0.5, 0.1] {
            let mut c = ForestConfig::new(4, 100 + seed);
            c.n_trees = 100;
            c.mtry = Some(2);
            c.sampling_weights = vec![factor, 1.0, 1.0, 1.0];
            let counts = forest_fit(&data, &c).unwrap().split_counts();
            shares.push(counts[0] as f64 / counts.iter().sum::<usize>() as f64);
        }
        if !(shares[0] >= shares[1] && shares[1] >= shares[2]) {
            violations += 1;
            eprintln!("seed {seed}: shares {shares:?}");
        }
    }
    let pass = report(
        "forest weight-zero exclusion and monotone usage",
        exclusion_ok && violations == 0,
        &format!(
            "splits on excluded feature {} (baseline {}), monotonicity violations {violations} of 20",
            excluded[0], baseline[0]
        ),
    );
    assert!(pass);
}

#[test]
fn rho_squared_correctness() {
    let mut r = rng(7);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let m = r.random_range(3..=200);
        let t = gaussian_vec(&mut r, m);
        let w = &t * r.random_range(-2.0..2.0) + gaussian_vec(&mut r, m);
        let got = rho_squared(t.view(), w.view()).unwrap();
        let c = textbook_pearson(t.as_slice().unwrap(), w.as_slice().unwrap());
        worst = worst.max((got - c * c).abs());
    }
    let t = gaussian_vec(&mut r, 100);
    let same = rho_squared(t.view(), t.view()).unwrap();
    let a = gaussian_vec(&mut r, 10_000);
    let b = gaussian_vec(&mut r, 10_000);
    let indep = rho_squared(a.view(), b.view()).unwrap();
    let pass = report(
        "fairness-metric correctness",
        worst <= 1e-12 && (same - 1.0).abs() <= 1e-12 && indep < 0.01,
        &format!("max difference {worst:.2e}, t=w {same:.15}, independent {indep:.5}"),
    );
    assert!(pass);
}

#[test]
fn serial_and_parallel_tables_identical() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("fixture.csv");
    write_proxy_csv(&csv, 400, 8, true);
    let data = DataSpec {
        path: csv,
        roles: ColumnRoles {
            outcome: "y".into(),
            sensitive: vec!["s".into()],
            c_features: vec!["x1".into()],
            ..Default::default()
        },
    };
    let mut all_equal = true;
    let families = [
        ModelFamily::Forest {
            n_trees: 40,
            min_node_size: 10,
            mtry: None,
            bootstrap: true,
        },
        ModelFamily::Knn { k: 15 },
        ModelFamily::LinearEdf {
            method: FitMethod::Augmented,
        },
    ];
    for model in families {
        let grid = match model {
            ModelFamily::LinearEdf { .. } => vec![0.0, 25.0, 1e4],
            _ => vec![1.0, 0.5, 0.1],
        };
        let config = ExperimentConfig {
            data: data.clone(),
            model,
            deweight_grid: grid.into_iter().map(DeweightValue::Common).collect(),
            replications: 4,
            holdout_size: 100,
            master_seed: 99,
            aux: AuxFamily::default(),
            proxy_adequacy: false,
        };
        let serial = run_experiment(&config, RunOptions { threads: Some(1) }).unwrap();
        let parallel = run_experiment(&config, RunOptions { threads: Some(8) }).unwrap();
        let same = serial.table.to_text() == parallel.table.to_text()
            && serial.table.to_json().unwrap() == parallel.table.to_json().unwrap();
        all_equal &= same;
    }
    let pass = report(
        "determinism serial vs 8 threads",
        all_equal,
        "summary tables compared byte for byte",
    );
    assert!(pass);
}

fn dummy_spec() -> DataSpec {
    DataSpec {
        path: PathBuf::from("in-memory"),
        roles: ColumnRoles::default(),
    }
}

struct External {
    file: &'static str,
    model: ModelFamily,
    roles: ColumnRoles,
    deweight: f64,
    category: &'static str,
    utility: (f64, f64),
    rho: (f64, f64),
    replications: usize,
}

fn external_cases() -> Vec<External> {
    vec![
        External {
            file: "pef.csv",
            model: ModelFamily::LinearEdf {
                method: FitMethod::ClosedForm,
            },
            roles: ColumnRoles {
                outcome: "wageinc".into(),
                sensitive: vec!["sex".into()],
                c_features: vec!["occ".into()],
                categorical: vec!["occ".into()],
                ..Default::default()
            },
            deweight: 1.0,
            category: "sex",
            utility: (24500.0, 26800.0),
            rho: (0.18, 0.26),
            replications: 50,
        },
        External {
            file: "compas.csv",
            model: ModelFamily::Forest {
                n_trees: 500,
                min_node_size: 10,
                mtry: None,
                bootstrap: true,
            },
            roles: ColumnRoles {
                outcome: "two_year_recid".into(),
                sensitive: vec!["race".into()],
                c_features: vec![
                    "decile_score".into(),
                    "sex".into(),
                    "priors_count".into(),
                    "age".into(),
                ],
                ignore: vec![
                    "c_jail_in".into(),
                    "c_jail_out".into(),
                    "c_offense_date".into(),
                    "screening_date".into(),
                    "in_custody".into(),
                    "out_custody".into(),
                ],
                ..Default::default()
            },
            deweight: 1.0,
            category: "race.African-American",
            utility: (0.19, 0.24),
            rho: (0.27, 0.35),
            replications: 10,
        },
        External {
            file: "mortgage.csv",
            model: ModelFamily::Knn { k: 25 },
            roles: ColumnRoles {
                outcome: "deny".into(),
                sensitive: vec!["black".into()],
                c_features: vec!["loan_val".into()],
                ..Default::default()
            },
            deweight: 1.0,
            category: "black",
            utility: (0.07, 0.12),
            rho: (0.04, 0.08),
            replications: 50,
        },
    ]
}

fn external_dir() -> Option<PathBuf> {
    std::env::var_os("EDF_EXTERNAL_DATA").map(PathBuf::from)
}

fn run_external(dir: &Path, case: &External) -> Option<bool> {
    let path = dir.join(case.file);
    if !path.exists() {
        skip(&format!("external {}", case.file), "file not found");
        return None;
    }
    let config = ExperimentConfig {
        data: DataSpec {
            path,
            roles: case.roles.clone(),
        },
        model: case.model.clone(),
        deweight_grid: vec![DeweightValue::Common(case.deweight)],
        replications: case.replications,
        holdout_size: 1000,
        master_seed: 1,
        aux: AuxFamily::default(),
        proxy_adequacy: false,
    };
    let out = match run_experiment(&config, RunOptions::default()) {
        Ok(o) => o,
        Err(e) => {
            report(&format!("external {}", case.file), false, &e.to_string());
            return Some(false);
        }
    };
    let table = &out.table;
    let Some(j) = table.categories.iter().position(|c| c == case.category) else {
        report(
            &format!("external {}", case.file),
            false,
            &format!("category {} not among {:?}", case.category, table.categories),
        );
        return Some(false);
    };
    let row = &table.rows[0];
    let u = row.mean_utility;
    let rho = row.mean_rho_squared[j];
    let pass = (case.utility.0..=case.utility.1).contains(&u) && (case.rho.0..=case.rho.1).contains(&rho);
    Some(report(
        &format!("external {}", case.file),
        pass,
        &format!("{} {u:.4}, rho^2 {rho:.4}", table.utility_metric.label()),
    ))
}

#[test]
fn external_datasets_when_present() {
    let Some(dir) = external_dir() else {
        skip("external data", "EDF_EXTERNAL_DATA not set");
        return;
    };
    let results: Vec<bool> = external_cases()
        .iter()
        .filter_map(|c| run_external(&dir, c))
        .collect();
    assert!(results.iter().all(|&p| p));
}
