use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabelDataset;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Train/validation/test fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: [f64; 3],
    pub seed: u64,
    /// Keep every group key inside a single partition.
    pub group_aware: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { fractions: [0.7, 0.15, 0.15], seed: 0, group_aware: false }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.iter().any(|f| f.is_nan() || *f <= 0.0) {
            return Err(Error::InvalidConfig(format!("split fractions {:?} must all be > 0", self.fractions)));
        }
        let sum: f64 = self.fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Partition into (train, validation, test). Each part keeps the original row
/// order.
///
/// Ungrouped: a seeded shuffle, cut at `round(f * N)`. Grouped: groups in a
/// seeded order, stably sorted by descending size, each assigned whole to the
/// partition currently furthest below its target size.
pub fn split_dataset(dataset: &LabelDataset, spec: &SplitSpec) -> Result<[LabelDataset; 3]> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "split"));
    let n = dataset.len();
    let mut parts: [Vec<usize>; 3] = Default::default();

    if spec.group_aware {
        let keys = dataset.group_keys().ok_or_else(|| {
            Error::InvalidConfig("group-aware split requested but the dataset has no group keys".into())
        })?;
        let mut order: Vec<&str> = Vec::new();
        let mut members: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, k) in keys.iter().enumerate() {
            members
                .entry(k.as_str())
                .or_insert_with(|| {
                    order.push(k.as_str());
                    Vec::new()
                })
                .push(i);
        }
        order.shuffle(&mut rng);
        order.sort_by_key(|k| std::cmp::Reverse(members[k].len()));
        let targets = spec.fractions.map(|f| f * n as f64);
        for key in order {
            let k = (0..3)
                .max_by(|&a, &b| {
                    let da = targets[a] - parts[a].len() as f64;
                    let db = targets[b] - parts[b].len() as f64;
                    // ties go to the lower index
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .unwrap();
            parts[k].extend_from_slice(&members[key]);
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let n_train = ((spec.fractions[0] * n as f64).round() as usize).min(n);
        let n_val = ((spec.fractions[1] * n as f64).round() as usize).min(n - n_train);
        parts[0] = idx[..n_train].to_vec();
        parts[1] = idx[n_train..n_train + n_val].to_vec();
        parts[2] = idx[n_train + n_val..].to_vec();
    }

    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    Ok(parts.map(|p| dataset.subset(&p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use std::collections::HashSet;

    fn dataset(n: usize, groups: Option<Vec<String>>) -> LabelDataset {
        LabelDataset::new(
            (0..n).map(|i| format!("i{i}")).collect(),
            groups,
            Array2::from_shape_fn((n, 2), |(i, j)| u8::from((i + j) % 3 == 0)),
            vec!["a".into(), "b".into()],
            None,
        )
        .unwrap()
    }

    #[test]
    fn ungrouped_sizes() {
        let d = dataset(100, None);
        let spec = SplitSpec { seed: 11, ..SplitSpec::default() };
        let [a, b, c] = split_dataset(&d, &spec).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (70, 15, 15));
        let all: HashSet<&String> = a.instance_ids().iter().chain(b.instance_ids()).chain(c.instance_ids()).collect();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn deterministic() {
        let d = dataset(57, None);
        let spec = SplitSpec { seed: 3, ..SplitSpec::default() };
        assert_eq!(split_dataset(&d, &spec).unwrap(), split_dataset(&d, &spec).unwrap());
        let other = SplitSpec { seed: 4, ..spec.clone() };
        assert_ne!(split_dataset(&d, &other).unwrap(), split_dataset(&d, &spec).unwrap());
    }

    #[test]
    fn two_groups_never_split() {
        let groups = (0..100).map(|i| if i < 50 { "g1" } else { "g2" }.to_string()).collect();
        let d = dataset(100, Some(groups));
        let spec = SplitSpec { fractions: [0.5, 0.25, 0.25], seed: 1, group_aware: true };
        let parts = split_dataset(&d, &spec).unwrap();
        for p in &parts {
            let keys: HashSet<&String> = p.group_keys().unwrap().iter().collect();
            assert!(keys.len() <= 1);
        }
        assert_eq!(parts[0].len(), 50);
    }

    #[test]
    fn grouped_requires_keys() {
        let spec = SplitSpec { group_aware: true, ..SplitSpec::default() };
        assert!(matches!(split_dataset(&dataset(10, None), &spec), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn fractions_validated() {
        let spec = SplitSpec { fractions: [0.7, 0.3, 0.0], ..SplitSpec::default() };
        assert!(split_dataset(&dataset(10, None), &spec).is_err());
        let spec = SplitSpec { fractions: [0.7, 0.2, 0.2], ..SplitSpec::default() };
        assert!(split_dataset(&dataset(10, None), &spec).is_err());
    }
}
