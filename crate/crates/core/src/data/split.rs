use rand::seq::SliceRandom;

use super::{Dataset, LabeledData};
use crate::error::{Error, Result};
use crate::rng;

fn check_fraction(test_fraction: f64) -> Result<()> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test_fraction must lie in (0, 1), got {test_fraction}")));
    }
    Ok(())
}

/// Seeded disjoint split into `(train, test)`.
///
/// With `by_user`, whole users are assigned to one side: the number of test
/// users is `round(users * test_fraction)`, clamped so both sides get one.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64, by_user: bool) -> Result<(Dataset, Dataset)> {
    check_fraction(test_fraction)?;
    let mut rng = rng::seeded(seed);
    let (train_idx, test_idx) = if by_user {
        let mut users: Vec<u32> = dataset.users.clone();
        users.sort_unstable();
        users.dedup();
        if users.len() < 2 {
            return Err(Error::Config(format!(
                "split by user needs at least 2 users, dataset has {}",
                users.len()
            )));
        }
        users.shuffle(&mut rng);
        let n_test = ((users.len() as f64 * test_fraction).round() as usize).clamp(1, users.len() - 1);
        let test_users = &users[..n_test];
        (0..dataset.len()).partition(|i| !test_users.contains(&dataset.users[*i]))
    } else {
        let mut idx: Vec<usize> = (0..dataset.len()).collect();
        idx.shuffle(&mut rng);
        let n_test = (dataset.len() as f64 * test_fraction).round() as usize;
        let mut test = idx.split_off(idx.len() - n_test);
        idx.sort_unstable();
        test.sort_unstable();
        (idx, test)
    };
    Ok((dataset.subset(&train_idx), dataset.subset(&test_idx)))
}

/// Row-level split of labeled data; the test side has `round(n * fraction)` rows.
pub fn split_labeled(data: &LabeledData, test_fraction: f64, seed: u64) -> Result<(LabeledData, LabeledData)> {
    check_fraction(test_fraction)?;
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let n_test = (data.len() as f64 * test_fraction).round() as usize;
    let mut test = idx.split_off(idx.len() - n_test);
    idx.sort_unstable();
    test.sort_unstable();
    Ok((data.subset(&idx), data.subset(&test)))
}

/// Carves a validation set off training data, keeping original row order on
/// both sides. A zero fraction returns an empty validation set.
pub fn holdout(data: &LabeledData, fraction: f64, seed: u64) -> Result<(LabeledData, LabeledData)> {
    if fraction == 0.0 {
        return Ok((data.clone(), data.subset(&[])));
    }
    split_labeled(data, fraction, rng::derive_seed(seed, &[0x7661_6c69]))
}
