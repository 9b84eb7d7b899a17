use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::{Dataset, Standardization};
use crate::error::{EdfError, Result};

/// Uniform random train/holdout partition.
///
/// Standardization is refit on the training rows and the same statistics are
/// applied to the holdout rows. Row order inside each part follows the
/// original order.
pub fn split_holdout(data: &Dataset, holdout_size: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.n_rows();
    if holdout_size == 0 {
        return Err(EdfError::InvalidParameter("holdout size must be positive".into()));
    }
    if holdout_size >= n {
        return Err(EdfError::HoldoutTooLarge {
            holdout: holdout_size,
            n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (test_rows, train_rows) = order.split_at_mut(holdout_size);
    test_rows.sort_unstable();
    train_rows.sort_unstable();
    partition(data, train_rows, test_rows)
}

/// Splits `data` into the given train and test rows, refitting the feature
/// standardization on the train rows only.
pub fn partition(data: &Dataset, train_rows: &[usize], test_rows: &[usize]) -> Result<(Dataset, Dataset)> {
    let raw = data.x_raw();
    let train_parts = data.parts_for_rows(&raw, train_rows);
    let test_parts = data.parts_for_rows(&raw, test_rows);
    let scaling = Standardization::fit(train_parts.x_raw.view(), &train_parts.schema)?;
    let train = Dataset::from_raw_with(train_parts, scaling.clone())?;
    let test = Dataset::from_raw_with(test_parts, scaling)?;
    Ok((train, test))
}
