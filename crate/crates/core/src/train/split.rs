use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seeded permutation of `0..n`.
pub fn shuffled(n: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// One (train, test) partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// `k` folds over a seeded shuffle; test folds differ in size by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 || k > n {
        return Err(Error::Contract(format!("cannot split {n} items into {k} folds")));
    }
    let order = shuffled(n, seed, 0);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut test = order[start..start + len].to_vec();
        let mut train: Vec<usize> = order[..start].iter().chain(&order[start + len..]).copied().collect();
        test.sort_unstable();
        train.sort_unstable();
        folds.push(Fold { train, test });
        start += len;
    }
    Ok(folds)
}

/// Train/validation/test fractions for a single split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    #[serde(default)]
    pub val_fraction: f64,
    #[serde(default)]
    pub test_fraction: f64,
    /// When set, `--fold k` selects the test fold of a `folds`-fold split.
    #[serde(default)]
    pub folds: Option<usize>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            val_fraction: 0.0,
            test_fraction: 0.1,
            folds: None,
        }
    }
}

/// Index sets produced by a [`SplitSpec`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| (0.0..1.0).contains(&f);
        if !ok(self.val_fraction) || !ok(self.test_fraction) || self.val_fraction + self.test_fraction >= 1.0 {
            return Err(Error::Config("split fractions must be in [0, 1) and sum below 1".into()));
        }
        Ok(())
    }

    /// With `fold`, the test set is that fold and validation is carved from
    /// the remaining items; otherwise the fractions apply to a shuffle.
    pub fn partition(&self, n: usize, seed: u64, fold: Option<usize>) -> Result<Partition> {
        self.validate()?;
        let (rest, test) = match (fold, self.folds) {
            (Some(f), Some(k)) => {
                let folds = kfold_split(n, k, seed)?;
                let chosen = folds
                    .get(f)
                    .ok_or_else(|| Error::Config(format!("fold {f} out of range for {k} folds")))?;
                let order = shuffled(n, seed, 1);
                let rest: Vec<usize> = order.into_iter().filter(|i| chosen.train.binary_search(i).is_ok()).collect();
                (rest, chosen.test.clone())
            }
            (Some(_), None) => return Err(Error::Config("--fold needs split.folds in the config".into())),
            (None, _) => {
                let order = shuffled(n, seed, 1);
                let n_test = (self.test_fraction * n as f64).round() as usize;
                let mut test = order[..n_test].to_vec();
                test.sort_unstable();
                (order[n_test..].to_vec(), test)
            }
        };
        let n_val = (self.val_fraction * n as f64).round() as usize;
        let n_val = n_val.min(rest.len().saturating_sub(1));
        let mut val = rest[..n_val].to_vec();
        let mut train = rest[n_val..].to_vec();
        val.sort_unstable();
        train.sort_unstable();
        if train.is_empty() {
            return Err(Error::Data("split leaves no training structures".into()));
        }
        Ok(Partition { train, val, test })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_items_ten_folds() {
        let folds = kfold_split(10, 10, 3).unwrap();
        assert!(folds.iter().all(|f| f.test.len() == 1 && f.train.len() == 9));
        assert_eq!(folds, kfold_split(10, 10, 3).unwrap());
        assert!(kfold_split(5, 10, 0).is_err());
    }

    #[test]
    fn fractions_partition() {
        let spec = SplitSpec {
            val_fraction: 0.1,
            test_fraction: 0.2,
            folds: None,
        };
        let p = spec.partition(50, 1, None).unwrap();
        assert_eq!((p.train.len(), p.val.len(), p.test.len()), (35, 5, 10));
        let mut all: Vec<usize> = p.train.iter().chain(&p.val).chain(&p.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn fold_selection() {
        let spec = SplitSpec {
            val_fraction: 0.0,
            test_fraction: 0.0,
            folds: Some(5),
        };
        let p = spec.partition(23, 4, Some(2)).unwrap();
        assert_eq!(p.test, kfold_split(23, 5, 4).unwrap()[2].test);
        assert!(spec.partition(23, 4, Some(5)).is_err());
        assert!(SplitSpec::default().partition(23, 4, Some(0)).is_err());
    }

    proptest! {
        #[test]
        fn folds_are_disjoint_and_cover(n in 2usize..200, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let folds = kfold_split(n, k, seed).unwrap();
            let mut seen = vec![0usize; n];
            let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
            for f in &folds {
                for &i in &f.test { seen[i] += 1; }
                prop_assert_eq!(f.test.len() + f.train.len(), n);
                prop_assert!(f.train.iter().all(|i| f.test.binary_search(i).is_err()));
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
