use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Assignment of rows to `k` cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&r| self.assignment[r] == fold)
            .collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&r| self.assignment[r] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified, seeded fold assignment.
///
/// Rows of each class are shuffled, the classes are concatenated and rows are
/// dealt to folds round-robin, so fold sizes differ by at most one and each
/// class is spread as evenly as its count allows.
pub fn make_folds(ds: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    stratified_folds(ds.class_codes(), ds.n_classes(), k, seed)
}

pub(crate) fn stratified_folds(
    labels: &[usize],
    n_classes: usize,
    k: usize,
    seed: u64,
) -> Result<FoldPlan> {
    let n = labels.len();
    if k < 2 {
        return Err(Error::config(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::config(format!("{k} folds requested for {n} rows")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (r, &y) in labels.iter().enumerate() {
        by_class[y].push(r);
    }
    let mut assignment = vec![0; n];
    let mut next = 0;
    for rows in &mut by_class {
        rows.shuffle(&mut rng);
        for &r in rows.iter() {
            assignment[r] = next % k;
            next += 1;
        }
    }
    Ok(FoldPlan { k, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds_with_classes(labels: Vec<usize>) -> Dataset {
        let card = labels.iter().max().unwrap() + 1;
        Dataset::from_codes(vec![labels], vec![card], 0).unwrap()
    }

    #[test]
    fn ten_rows_ten_folds() {
        let ds = ds_with_classes(vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        let plan = make_folds(&ds, 10, 3).unwrap();
        assert_eq!(plan.fold_sizes(), vec![1; 10]);
    }

    #[test]
    fn ten_rows_three_folds() {
        let ds = ds_with_classes(vec![0, 1, 1, 0, 2, 1, 0, 0, 2, 1]);
        let mut sizes = make_folds(&ds, 3, 9).unwrap().fold_sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);
    }

    #[test]
    fn deterministic_given_seed() {
        let ds = ds_with_classes((0..50).map(|i| i % 3).collect());
        assert_eq!(make_folds(&ds, 5, 11).unwrap(), make_folds(&ds, 5, 11).unwrap());
    }

    #[test]
    fn too_many_folds_is_config_error() {
        let ds = ds_with_classes(vec![0, 1, 0]);
        assert!(matches!(make_folds(&ds, 4, 0), Err(Error::Config(_))));
        assert!(matches!(make_folds(&ds, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn stratifies_classes() {
        let ds = ds_with_classes((0..100).map(|i| usize::from(i < 20)).collect());
        let plan = make_folds(&ds, 10, 5).unwrap();
        for f in 0..10 {
            let minority = plan
                .test_rows(f)
                .iter()
                .filter(|&&r| ds.class_codes()[r] == 1)
                .count();
            assert_eq!(minority, 2);
        }
    }

    proptest! {
        #[test]
        fn folds_partition_rows(labels in prop::collection::vec(0usize..4, 2..80), k in 2usize..12, seed: u64) {
            prop_assume!(k <= labels.len());
            let plan = stratified_folds(&labels, 4, k, seed).unwrap();
            let sizes = plan.fold_sizes();
            prop_assert_eq!(sizes.iter().sum::<usize>(), labels.len());
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut seen = vec![0; labels.len()];
            for f in 0..k {
                for r in plan.test_rows(f) { seen[r] += 1; }
            }
            prop_assert!(seen.iter().all(|&s| s == 1));
        }
    }
}
