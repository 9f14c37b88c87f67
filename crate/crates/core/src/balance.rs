//! Class-balancing weights from label counts.
//!
//! Each class gets `n_e = (1 - beta) / (1 - beta^n)` and the weights are the
//! `n_e` normalized to sum to `M` (or `M + 1` when all-zero rows are counted as
//! an extra negative category). `beta = 0` gives unit weights; `beta -> 1`
//! approaches inverse class frequency.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::LabelDataset;
use crate::error::{Error, Result};

/// Default `beta`.
pub const DEFAULT_BETA: f64 = 0.9999;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    /// Instances with `y_j = 1`, per class.
    pub per_class: Vec<u64>,
    /// All-zero rows.
    pub negative: u64,
    pub total_instances: u64,
}

impl ClassCounts {
    pub fn from_labels(labels: ArrayView2<u8>) -> Result<Self> {
        if labels.nrows() == 0 {
            return Err(Error::InvalidInput("cannot count labels of an empty dataset".into()));
        }
        let mut per_class = vec![0u64; labels.ncols()];
        let mut negative = 0u64;
        for row in labels.rows() {
            let mut any = false;
            for (c, &y) in per_class.iter_mut().zip(row.iter()) {
                if y == 1 {
                    *c += 1;
                    any = true;
                }
            }
            if !any {
                negative += 1;
            }
        }
        Ok(ClassCounts { per_class, negative, total_instances: labels.nrows() as u64 })
    }
}

pub fn count_labels(dataset: &LabelDataset) -> Result<ClassCounts> {
    ClassCounts::from_labels(dataset.labels().view())
}

/// Normalized balancing weights. Serializes as
/// `{"beta": .., "per_class": [..], "negative": ..|null}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceWeights {
    pub beta: f64,
    pub per_class: Vec<f64>,
    pub negative: Option<f64>,
}

impl BalanceWeights {
    /// All weights 1.0.
    pub fn uniform(n_classes: usize, with_negative: bool) -> Self {
        BalanceWeights { beta: 0.0, per_class: vec![1.0; n_classes], negative: with_negative.then_some(1.0) }
    }

    /// Cumulative weight of one instance: the sum of its present classes'
    /// weights, or the negative-category weight for an all-zero row.
    pub fn instance_weight(&self, targets: ArrayView1<u8>) -> Result<f64> {
        if targets.len() != self.per_class.len() {
            return Err(Error::InvalidConfig(format!(
                "balance weights cover {} classes, row has {}",
                self.per_class.len(),
                targets.len()
            )));
        }
        let mut any = false;
        let mut sum = 0.0;
        for (&w, &y) in self.per_class.iter().zip(targets.iter()) {
            if y == 1 {
                sum += w;
                any = true;
            }
        }
        if any {
            Ok(sum)
        } else {
            self.negative.ok_or_else(|| {
                Error::InvalidConfig("negative instance but no negative-category weight configured".into())
            })
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// `(1 - beta) / (1 - beta^n)`, with `beta^n = exp(n log beta)`.
fn effective_number(n: u64, beta: f64) -> f64 {
    // 1 - exp(x) == -expm1(x); exact limit 1 when beta = 0 (log 0 = -inf)
    let denom = -(n as f64 * beta.ln()).exp_m1();
    (1.0 - beta) / denom
}

/// Balancing weights for `counts`. With `include_negative`, all-zero rows form
/// an extra category and the weights sum to `M + 1`.
pub fn effective_weights(counts: &ClassCounts, beta: f64, include_negative: bool) -> Result<BalanceWeights> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidConfig(format!("beta {beta} outside [0, 1)")));
    }
    if counts.per_class.is_empty() {
        return Err(Error::InvalidInput("no classes to weight".into()));
    }
    if let Some(j) = counts.per_class.iter().position(|&n| n == 0) {
        return Err(Error::ZeroCount { what: format!("class {j}") });
    }
    if include_negative && counts.negative == 0 {
        return Err(Error::ZeroCount { what: "negative category".into() });
    }

    let ne: Vec<f64> = counts.per_class.iter().map(|&n| effective_number(n, beta)).collect();
    let ne_neg = include_negative.then(|| effective_number(counts.negative, beta));
    let m = ne.len() as f64;
    let (scale, total) = match ne_neg {
        Some(neg) => (m + 1.0, ne.iter().fold(0.0, |acc, &v| acc + v) + neg),
        None => (m, ne.iter().fold(0.0, |acc, &v| acc + v)),
    };
    Ok(BalanceWeights {
        beta,
        per_class: ne.iter().map(|&v| scale * v / total).collect(),
        negative: ne_neg.map(|v| scale * v / total),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn counts(per_class: &[u64], negative: u64) -> ClassCounts {
        ClassCounts {
            per_class: per_class.to_vec(),
            negative,
            total_instances: per_class.iter().sum::<u64>() + negative,
        }
    }

    #[test]
    fn count_examples() {
        let c = ClassCounts::from_labels(array![[1u8, 0], [0, 0], [1, 1]].view()).unwrap();
        assert_eq!(c.per_class, vec![2, 1]);
        assert_eq!(c.negative, 1);
        assert_eq!(c.total_instances, 3);

        let c = ClassCounts::from_labels(array![[0u8, 0], [0, 0]].view()).unwrap();
        assert_eq!(c.per_class, vec![0, 0]);
        assert_eq!(c.negative, 2);

        let c = ClassCounts::from_labels(array![[1u8, 1, 1]].view()).unwrap();
        assert_eq!(c.per_class, vec![1, 1, 1]);
        assert_eq!(c.negative, 0);

        assert!(ClassCounts::from_labels(ndarray::Array2::<u8>::zeros((0, 3)).view()).is_err());
    }

    #[test]
    fn beta_zero_is_unit() {
        for include in [false, true] {
            let w = effective_weights(&counts(&[3, 700, 12], 40), 0.0, include).unwrap();
            assert!(w.per_class.iter().all(|&v| v == 1.0));
            if include {
                assert_eq!(w.negative, Some(1.0));
            }
        }
    }

    #[test]
    fn negative_category_example() {
        // 40-digit reference values
        let w = effective_weights(&counts(&[10, 90], 100), 0.9, true).unwrap();
        assert_relative_eq!(w.per_class[0], 1.302_812_750_145_284_6, max_relative = 1e-13);
        assert_relative_eq!(w.per_class[1], 0.848_614_677_897_910_8, max_relative = 1e-13);
        assert_relative_eq!(w.negative.unwrap(), 0.848_572_571_956_804_6, max_relative = 1e-13);
    }

    #[test]
    fn single_class_is_one() {
        let w = effective_weights(&counts(&[5], 0), 0.9999, false).unwrap();
        assert_eq!(w.per_class, vec![1.0]);
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(matches!(effective_weights(&counts(&[5, 0], 3), 0.9, false), Err(Error::ZeroCount { .. })));
        assert!(matches!(effective_weights(&counts(&[5, 2], 0), 0.9, true), Err(Error::ZeroCount { .. })));
        assert!(effective_weights(&counts(&[5, 2], 0), 1.0, false).is_err());
    }

    #[test]
    fn json_shape() {
        let w = effective_weights(&counts(&[10, 90], 100), 0.9, true).unwrap();
        let v: serde_json::Value = serde_json::from_str(&w.to_json().unwrap()).unwrap();
        assert!(v["beta"].is_number() && v["per_class"].is_array() && v["negative"].is_number());
        assert_eq!(BalanceWeights::from_json(&w.to_json().unwrap()).unwrap(), w);
        let none = BalanceWeights::uniform(2, false);
        assert!(none.to_json().unwrap().contains("\"negative\":null"));
    }

    #[test]
    fn inverse_frequency_limit() {
        let ns = [1u64, 7, 50, 333, 2_000, 10_000];
        let w = effective_weights(&counts(&ns, 0), 1.0 - 1e-9, false).unwrap();
        let prod: Vec<f64> = w.per_class.iter().zip(&ns).map(|(w, &n)| w * n as f64).collect();
        let lo = prod.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = prod.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((hi - lo) / lo < 0.01, "spread {}", (hi - lo) / lo);
    }

    proptest! {
        #[test]
        fn normalization(ns in prop::collection::vec(1u64..100_000, 1..20), neg in 1u64..100_000,
                         beta in 0.0f64..0.99999, include in any::<bool>()) {
            let w = effective_weights(&counts(&ns, neg), beta, include).unwrap();
            let sum: f64 = w.per_class.iter().sum::<f64>() + w.negative.unwrap_or(0.0);
            let target = ns.len() as f64 + if include { 1.0 } else { 0.0 };
            prop_assert!((sum - target).abs() < 1e-9);
        }

        #[test]
        // beta^n must stay well above 1e-16, or 1 - beta^n rounds to 1 and
        // the two weights tie exactly
        fn rarer_weighs_more(a in 1u64..5_000, b in 1u64..5_000, beta in 0.999f64..0.99999) {
            prop_assume!(a != b);
            let w = effective_weights(&counts(&[a, b], 0), beta, false).unwrap();
            if a < b {
                prop_assert!(w.per_class[0] > w.per_class[1]);
            } else {
                prop_assert!(w.per_class[0] < w.per_class[1]);
            }
        }
    }
}
