#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use edf_core::tabular::Dataset;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    Array2::from_shape_simple_fn((n, p), || normal.sample(rng))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    Array1::from_shape_simple_fn(n, || normal.sample(rng))
}

/// Raw columns of the proxy fixture: s ~ Bernoulli(1/2), x1 = s + N(0, 0.5²),
/// x2 ~ N(0, 1), y = x1 + x2 + N(0, 1).
pub fn proxy_columns(n: usize, seed: u64) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let mut r = rng(seed);
    let half = Normal::new(0.0, 0.5).unwrap();
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut x = Array2::zeros((n, 2));
    let mut y = Array1::zeros(n);
    let mut s = Array2::zeros((n, 1));
    for i in 0..n {
        let si = f64::from(r.random_bool(0.5));
        let x1 = si + half.sample(&mut r);
        let x2 = unit.sample(&mut r);
        x[[i, 0]] = x1;
        x[[i, 1]] = x2;
        s[[i, 0]] = si;
        y[i] = x1 + x2 + unit.sample(&mut r);
    }
    (x, y, s)
}

/// The proxy fixture with x1 as the only proxy feature.
pub fn proxy_fixture(n: usize, seed: u64) -> Dataset {
    let (x, y, s) = proxy_columns(n, seed);
    Dataset::from_numeric(x, y, s, vec![true, false]).unwrap()
}

/// Binary-outcome variant: y = 1{x1 + x2 + N(0, 1) > 0.5}.
pub fn binary_proxy_fixture(n: usize, seed: u64) -> Dataset {
    let (x, y, s) = proxy_columns(n, seed);
    let y = y.mapv(|v| f64::from(v > 0.5));
    Dataset::from_numeric(x, y, s, vec![true, false]).unwrap()
}

/// Writes the proxy fixture as a CSV with columns x1, x2, s, y.
pub fn write_proxy_csv(path: &Path, n: usize, seed: u64, binary: bool) {
    let (x, y, s) = proxy_columns(n, seed);
    let mut f = std::fs::File::create(path).unwrap();
    writeln!(f, "x1,x2,s,y").unwrap();
    for i in 0..n {
        let yi = if binary { f64::from(y[i] > 0.5) } else { y[i] };
        writeln!(f, "{},{},{},{}", x[[i, 0]], x[[i, 1]], s[[i, 0]], yi).unwrap();
    }
}

/// Textbook Pearson correlation from raw sums.
pub fn textbook_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let saa: f64 = a.iter().map(|v| v * v).sum();
    let sbb: f64 = b.iter().map(|v| v * v).sum();
    let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
}

/// Least squares with an intercept column via dense normal equations and
/// Gaussian elimination with partial pivoting. Returns (intercept, slopes).
pub fn ols_oracle(x: &Array2<f64>, y: &Array1<f64>) -> (f64, Vec<f64>) {
    let (n, p) = x.dim();
    let k = p + 1;
    let row = |i: usize, j: usize| if j == 0 { 1.0 } else { x[[i, j - 1]] };
    let mut a = vec![vec![0.0; k + 1]; k];
    for r in 0..k {
        for c in 0..k {
            a[r][c] = (0..n).map(|i| row(i, r) * row(i, c)).sum();
        }
        a[r][k] = (0..n).map(|i| row(i, r) * y[i]).sum();
    }
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let sol: Vec<f64> = (0..k).map(|r| a[r][k] / a[r][r]).collect();
    (sol[0], sol[1..].to_vec())
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Prints one result line and returns `pass`. Writes to the stdout handle
/// directly so the line survives libtest output capture.
pub fn report(name: &str, pass: bool, detail: &str) -> bool {
    let line = format!("{name}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    pass
}

/// Prints one skip line, uncaptured like [`report`].
pub fn skip(name: &str, reason: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{name}: SKIP ({reason})");
}
