use rand::seq::SliceRandom;

use super::encode::DesignMatrix;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Number of test rows for `n` rows: `round(n * fraction)`, halves rounding up.
pub fn test_size(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction) + 0.5).floor() as usize
}

/// Row indices of a seeded train/test partition, each half in ascending order.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} outside [0, 1]"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let k = test_size(n, test_fraction).min(n);
    let mut test = order[..k].to_vec();
    let mut train = order[k..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Seeded row-disjoint split into `(train, test)`.
pub fn train_test_split(
    m: &DesignMatrix,
    test_fraction: f64,
    seed: u64,
) -> Result<(DesignMatrix, DesignMatrix)> {
    let (train, test) = split_indices(m.nrows(), test_fraction, seed)?;
    Ok((m.select_rows(&train), m.select_rows(&test)))
}
