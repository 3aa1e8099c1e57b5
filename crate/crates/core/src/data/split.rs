use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Sample indices of one validation fold and the remaining training data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified partition into `k` folds of sample indices (each sorted).
///
/// Groups are shuffled within each class and dealt round-robin with one
/// counter running across classes, so fold sizes differ by at most one
/// group and each class is spread as evenly as possible. The segments of an
/// utterance stay together.
pub fn kfold_split(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::config("k", format!("need at least 2 folds, got {k}")));
    }
    let mut groups: BTreeMap<usize, (usize, Vec<usize>)> = BTreeMap::new();
    for (i, s) in ds.samples().iter().enumerate() {
        let entry = groups.entry(s.group).or_insert((s.label, Vec::new()));
        if entry.0 != s.label {
            return Err(Error::data(Some(i), format!("group {} mixes labels {} and {}", s.group, entry.0, s.label)));
        }
        entry.1.push(i);
    }
    if k > groups.len() {
        return Err(Error::config(
            "k",
            format!("{k} folds requested but the dataset has only {} independent items", groups.len()),
        ));
    }
    let mut by_class: Vec<Vec<&Vec<usize>>> = vec![Vec::new(); crate::NUM_CLASSES];
    for (label, members) in groups.values() {
        by_class[*label].push(members);
    }
    let mut r = rng::seeded(seed);
    let mut folds = vec![Vec::new(); k];
    let mut counter = 0;
    for class in &mut by_class {
        class.shuffle(&mut r);
        for members in class.iter() {
            folds[counter % k].extend_from_slice(members);
            counter += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

impl Fold {
    /// Fold `index` as validation data, the other `k − 1` as training data.
    pub fn select(folds: &[Vec<usize>], index: usize) -> Result<Fold> {
        if index >= folds.len() {
            return Err(Error::config("fold", format!("fold {index} of {}", folds.len())));
        }
        let mut train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != index)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        train.sort_unstable();
        Ok(Fold {
            train,
            test: folds[index].clone(),
        })
    }
}

/// `repeats` independent resamplings of a `k`-fold split, each holding out
/// fold 0. Resampling `r` uses a seed derived from `(seed, r)`.
pub fn repeated_kfold(ds: &Dataset, k: usize, repeats: usize, seed: u64) -> Result<Vec<Fold>> {
    (0..repeats)
        .map(|r| Fold::select(&kfold_split(ds, k, rng::derive_seed(seed, 100 + r as u64))?, 0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Modality, Sample};
    use crate::tensor::Tensor;

    fn balanced(per_class: usize) -> Dataset {
        let samples = (0..6 * per_class)
            .map(|i| Sample {
                input: Tensor::zeros([1, 1, 1]),
                label: i % 6,
                group: i,
            })
            .collect();
        Dataset::new("b", Modality::Visual, samples).unwrap()
    }

    #[test]
    fn partition_and_sizes() {
        let ds = Dataset::new(
            "h",
            Modality::Visual,
            (0..100)
                .map(|i| Sample {
                    input: Tensor::zeros([1, 1, 1]),
                    label: i % 6,
                    group: i,
                })
                .collect(),
        )
        .unwrap();
        let folds = kfold_split(&ds, 5, 3).unwrap();
        assert!(folds.iter().all(|f| f.len() == 20));
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn stratified_when_divisible() {
        let ds = balanced(10);
        for seed in 0..5 {
            for fold in kfold_split(&ds, 5, seed).unwrap() {
                let mut hist = [0usize; 6];
                fold.iter().for_each(|&i| hist[ds.samples()[i].label] += 1);
                assert_eq!(hist, [2; 6]);
            }
        }
    }

    #[test]
    fn groups_stay_together() {
        let samples = (0..60)
            .map(|i| Sample {
                input: Tensor::zeros([1, 1, 1]),
                label: (i / 3) % 6,
                group: i / 3,
            })
            .collect();
        let ds = Dataset::new("g", Modality::Audio, samples).unwrap();
        for fold in kfold_split(&ds, 4, 9).unwrap() {
            for &i in &fold {
                let g = i / 3;
                assert!((g * 3..g * 3 + 3).all(|j| fold.contains(&j)));
            }
        }
    }

    #[test]
    fn errors_and_selection() {
        let ds = balanced(1);
        assert!(matches!(kfold_split(&ds, 7, 0), Err(Error::Config { field: "k", .. })));
        let folds = kfold_split(&ds, 3, 0).unwrap();
        let f = Fold::select(&folds, 1).unwrap();
        assert_eq!(f.train.len() + f.test.len(), 6);
        assert!(f.test.iter().all(|i| !f.train.contains(i)));
        let reps = repeated_kfold(&ds, 3, 5, 1).unwrap();
        assert_eq!(reps.len(), 5);
    }
}
