//! Synthetic multi-label data with a controllable share of negatives.
//!
//! Each class has a Gaussian prototype in feature space, and so does the
//! "nothing present" background. A positive instance draws a label set
//! (cardinality from a zero-truncated Poisson, classes without replacement in
//! proportion to a power-law marginal) and its features are the mean of the
//! present prototypes plus isotropic noise. Negatives are the background
//! prototype plus noise.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LabelDataset;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_instances: usize,
    pub n_classes: usize,
    pub n_features: usize,
    /// Share of all-zero rows; realized as `round(fraction * N)` exactly.
    pub negative_fraction: f64,
    /// Rate of the zero-truncated Poisson label-set size.
    pub label_cardinality_mean: f64,
    /// Class `j` marginal is proportional to `(j + 1)^-class_skew`.
    pub class_skew: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_instances: 10_000,
            n_classes: 8,
            n_features: 16,
            negative_fraction: 0.5,
            label_cardinality_mean: 1.5,
            class_skew: 1.0,
            noise_sigma: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_instances == 0 || self.n_classes == 0 || self.n_features == 0 {
            return bad("instances, classes and features must all be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.negative_fraction) {
            return bad(format!("negative fraction {} outside [0, 1]", self.negative_fraction));
        }
        if !(self.label_cardinality_mean > 0.0 && self.label_cardinality_mean.is_finite()) {
            return bad(format!("label cardinality mean {} must be > 0", self.label_cardinality_mean));
        }
        if !(self.class_skew >= 0.0 && self.class_skew.is_finite()) {
            return bad(format!("class skew {} must be >= 0", self.class_skew));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {} must be >= 0", self.noise_sigma));
        }
        Ok(())
    }
}

/// Generate a dataset (ids `s000000`.., classes `c0`..) fully determined by
/// `config.seed`.
pub fn synthesize(config: &SyntheticConfig) -> Result<LabelDataset> {
    config.validate()?;
    let (n, m, d) = (config.n_instances, config.n_classes, config.n_features);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "synthesize"));

    let prototypes = Array2::from_shape_fn((m + 1, d), |_| rng.sample::<f64, _>(StandardNormal));
    let background = prototypes.row(m);
    let marginals: Vec<f64> = (0..m).map(|j| ((j + 1) as f64).powf(-config.class_skew)).collect();
    let cardinality = Poisson::new(config.label_cardinality_mean).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let n_neg = ((config.negative_fraction * n as f64).round() as usize).min(n);
    let mut is_negative = vec![false; n];
    is_negative[..n_neg].iter_mut().for_each(|v| *v = true);
    is_negative.shuffle(&mut rng);

    let mut labels = Array2::<u8>::zeros((n, m));
    let mut features = Array2::<f64>::zeros((n, d));
    let mut chosen = Vec::with_capacity(m);
    for i in 0..n {
        let mut row = features.row_mut(i);
        if is_negative[i] {
            row.assign(&background);
        } else {
            let k = loop {
                let k = cardinality.sample(&mut rng) as usize;
                if k >= 1 {
                    break k.min(m);
                }
            };
            sample_without_replacement(&marginals, k, &mut rng, &mut chosen);
            for &j in &chosen {
                labels[[i, j]] = 1;
                row += &prototypes.row(j);
            }
            row /= k as f64;
        }
        row.mapv_inplace(|v| v + noise.sample(&mut rng));
    }

    LabelDataset::new(
        (0..n).map(|i| format!("s{i:06}")).collect(),
        None,
        labels,
        (0..m).map(|j| format!("c{j}")).collect(),
        Some(features),
    )
}

/// Draw `k` distinct indices with probability proportional to `weights`.
fn sample_without_replacement(weights: &[f64], k: usize, rng: &mut impl Rng, out: &mut Vec<usize>) {
    out.clear();
    let mut remaining: Vec<usize> = (0..weights.len()).collect();
    for _ in 0..k {
        let total: f64 = remaining.iter().map(|&j| weights[j]).sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = remaining.len() - 1;
        for (pos, &j) in remaining.iter().enumerate() {
            if u < weights[j] {
                pick = pos;
                break;
            }
            u -= weights[j];
        }
        out.push(remaining.remove(pick));
    }
    out.sort_unstable();
}

/// Column sums, exposed for tests of the marginal skew.
#[cfg(test)]
fn class_totals(d: &LabelDataset) -> Vec<u64> {
    d.labels().map(|&v| u64::from(v)).sum_axis(ndarray::Axis(0)).to_vec()
}
