//! Deterministic data splitting: outer holdout, k-fold plans, bootstrap
//! resampling with out-of-bag complements.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Shuffles row indices and takes the first `round(fraction * m)` rows as
/// the held-out validation split; the rest train. With `stratified`, the
/// same rule is applied per class and the parts are concatenated, so both
/// splits keep the overall class ratio.
pub fn split_outer(
    data: &Dataset,
    fraction: f64,
    stratified: bool,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(0.0..=1.0).contains(&fraction) || !fraction.is_finite() {
        return Err(Error::invalid(
            "fraction",
            format!("holdout fraction {fraction} outside [0, 1]"),
        ));
    }
    let groups: Vec<Vec<usize>> = if stratified {
        let pos: Vec<usize> = (0..data.len())
            .filter(|&r| data.label(r) == Some(1))
            .collect();
        let neg: Vec<usize> = (0..data.len())
            .filter(|&r| data.label(r) == Some(-1))
            .collect();
        vec![pos, neg]
    } else {
        vec![(0..data.len()).collect()]
    };

    let mut rng = SplitMix64::new(seed);
    let mut validation = Vec::new();
    let mut train = Vec::new();
    for mut group in groups {
        rng.shuffle(&mut group);
        let take = (fraction * group.len() as f64).round() as usize;
        validation.extend_from_slice(&group[..take]);
        train.extend_from_slice(&group[take..]);
    }
    Ok((data.select_rows(&train), data.select_rows(&validation)))
}

/// Fold assignment for k-fold cross-validation: a seeded shuffle cut into
/// k contiguous chunks whose sizes differ by at most one.
#[derive(Clone, Debug)]
pub struct FoldPlan {
    folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn new(m: usize, k: usize, seed: u64) -> Result<FoldPlan> {
        if k < 2 || k > m {
            return Err(Error::invalid("folds", format!("{k} folds for {m} rows")));
        }
        let mut order: Vec<usize> = (0..m).collect();
        SplitMix64::new(seed).shuffle(&mut order);
        let base = m / k;
        let extra = m % k;
        let mut folds = Vec::with_capacity(k);
        let mut at = 0;
        for f in 0..k {
            let size = base + usize::from(f < extra);
            folds.push(order[at..at + size].to_vec());
            at += size;
        }
        Ok(FoldPlan { folds })
    }

    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// Row indices held out by fold `f`.
    pub fn held_out(&self, f: usize) -> &[usize] {
        &self.folds[f]
    }

    /// Row indices available for training in fold `f`.
    pub fn training(&self, f: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != f)
            .flat_map(|(_, fold)| fold.iter().copied())
            .collect();
        rows.sort_unstable();
        rows
    }
}

/// One bootstrap replicate: `m` draws with replacement plus the out-of-bag
/// complement, both as row indices into the source dataset.
#[derive(Clone, Debug)]
pub struct BootstrapSample {
    pub in_bag: Vec<usize>,
    pub out_of_bag: Vec<usize>,
}

/// Draws a bootstrap sample of size `m` from `m` rows.
pub fn bootstrap_sample(m: usize, seed: u64) -> BootstrapSample {
    let mut rng = SplitMix64::new(seed);
    let mut in_bag = Vec::with_capacity(m);
    let mut seen = vec![false; m];
    for _ in 0..m {
        let r = rng.next_below(m);
        in_bag.push(r);
        seen[r] = true;
    }
    let out_of_bag = (0..m).filter(|&r| !seen[r]).collect();
    BootstrapSample { in_bag, out_of_bag }
}
