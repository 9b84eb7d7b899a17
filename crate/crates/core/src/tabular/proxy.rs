use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{EdfError, Result};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyScore {
    pub feature: String,
    /// Squared sample correlation with the sensitive column.
    pub score: f64,
}

/// Ranks features by squared correlation with sensitive column
/// `sensitive_index`, strongest first. Advisory only; the proxy set is
/// chosen by the user.
pub fn rank_proxy_features(data: &Dataset, sensitive_index: usize) -> Result<Vec<ProxyScore>> {
    if sensitive_index >= data.n_sensitive() {
        return Err(EdfError::InvalidParameter(format!(
            "sensitive index {sensitive_index} out of range for {} columns",
            data.n_sensitive()
        )));
    }
    if data.n_rows() < 3 {
        return Err(EdfError::TooFewValues {
            needed: 3,
            found: data.n_rows(),
        });
    }
    let s = data.s().column(sensitive_index).to_vec();
    if stats::sample_variance(&s) == 0.0 {
        return Err(EdfError::DegenerateSensitive(
            data.sensitive()[sensitive_index].name.clone(),
        ));
    }
    let mut scores: Vec<ProxyScore> = data
        .schema()
        .names()
        .zip(data.x().columns())
        .map(|(name, col)| {
            let r = stats::pearson(&col.to_vec(), &s).unwrap_or(0.0);
            ProxyScore {
                feature: name.to_string(),
                score: (r * r).clamp(0.0, 1.0),
            }
        })
        .collect();
    // stable: equal scores keep column order
    scores.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_copy_ranks_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200;
        let s: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let x = Array2::from_shape_fn((n, 2), |(i, j)| if j == 0 { s[i] } else { rng.random() });
        let d = Dataset::from_numeric(
            x,
            Array1::from_shape_fn(n, |i| i as f64),
            Array2::from_shape_fn((n, 1), |(i, _)| s[i]),
            vec![false, false],
        )
        .unwrap();
        let ranked = rank_proxy_features(&d, 0).unwrap();
        assert_eq!(ranked[0].feature, "x0");
        assert!((ranked[0].score - 1.0).abs() < 1e-8);
        assert!(ranked[1].score < ranked[0].score);
    }

    #[test]
    fn constant_sensitive_rejected() {
        let x = Array2::from_shape_fn((5, 1), |(i, _)| i as f64);
        let d = Dataset::from_numeric(x, Array1::zeros(5), Array2::from_elem((5, 1), 2.0), vec![false])
            .unwrap();
        assert!(matches!(
            rank_proxy_features(&d, 0),
            Err(EdfError::DegenerateSensitive(_))
        ));
    }
}
