use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatasetError;

/// Per-character split sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitSizes {
    pub const fn new(train: usize, validation: usize, test: usize) -> Self {
        SplitSizes {
            train,
            validation,
            test,
        }
    }

    /// 15 train, 5 validation, 5 test.
    pub const fn standard() -> Self {
        Self::new(15, 5, 5)
    }

    /// 12 train, 13 test, no validation.
    pub const fn comparison() -> Self {
        Self::new(12, 0, 13)
    }

    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }
}

/// Sample ordinals assigned to each role for one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub fold_index: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitPlan {
    /// Panics if any ordinal appears in more than one role.
    pub fn assert_disjoint(&self) {
        let mut seen = std::collections::BTreeSet::new();
        for &o in self.train.iter().chain(&self.validation).chain(&self.test) {
            assert!(seen.insert(o), "ordinal {o} appears in two split roles");
        }
    }
}

/// Builds `n_folds` plans over ordinals `0..n_samples`.
///
/// The test set is the last `sizes.test` ordinals and is shared by every
/// fold. The remaining pool is shuffled once from `seed`; fold `f` takes the
/// `f`-th block of `sizes.validation` ordinals as validation and the first
/// `sizes.train` of the rest (in pool order) as training.
pub fn make_splits(
    n_samples: usize,
    sizes: SplitSizes,
    n_folds: usize,
    seed: u64,
) -> Result<Vec<SplitPlan>, DatasetError> {
    let infeasible = |reason: String| DatasetError::InfeasiblePlan(reason);
    if n_folds == 0 {
        return Err(infeasible("n_folds must be at least 1".into()));
    }
    if sizes.total() > n_samples {
        return Err(infeasible(format!(
            "split sizes {}/{}/{} exceed {} samples",
            sizes.train, sizes.validation, sizes.test, n_samples
        )));
    }
    if sizes.validation == 0 && n_folds > 1 {
        return Err(infeasible("multiple folds need a validation set".into()));
    }
    let pool_len = n_samples - sizes.test;
    if sizes.validation * n_folds > pool_len {
        return Err(infeasible(format!(
            "{n_folds} disjoint validation blocks of {} do not fit in {pool_len} samples",
            sizes.validation
        )));
    }

    let test: Vec<usize> = (pool_len..n_samples).collect();
    let mut pool: Vec<usize> = (0..pool_len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);

    let plans = (0..n_folds)
        .map(|fold| {
            let lo = fold * sizes.validation;
            let hi = lo + sizes.validation;
            let mut validation = pool[lo..hi].to_vec();
            validation.sort_unstable();
            let train: Vec<usize> = pool[..lo]
                .iter()
                .chain(&pool[hi..])
                .copied()
                .take(sizes.train)
                .collect();
            SplitPlan {
                fold_index: fold,
                train,
                validation,
                test: test.clone(),
            }
        })
        .collect();
    Ok(plans)
}
