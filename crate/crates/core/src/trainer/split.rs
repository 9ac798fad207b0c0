use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::util::{derive_seed, rng};

/// Seeded stratified split of item indices.
///
/// Within each class `round(train_fraction·n_c)` items go to the train side.
/// Both index lists come back sorted.
pub fn stratified_split(labels: &[usize], train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} outside [0,1]"
        )));
    }
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng(derive_seed(seed, &format!("split-{c}"))));
        let n_train = (train_fraction * members.len() as f64).round() as usize;
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
