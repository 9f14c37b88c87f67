//! Repeated train/evaluate runs: loss-family comparisons and the lambda sweep.
//!
//! Runs are independent and executed on the rayon pool; each is fully
//! determined by its seed, and results are collected in job order.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{init_model, Activation, MlpConfig};
use super::train::{evaluate, train, TrainConfig};
use crate::data::LabelDataset;
use crate::error::{Error, Result};
use crate::losses::LossFamily;
use crate::metrics::{MetricsReport, DEFAULT_THRESHOLD};
use crate::seed::derive_seed;

pub const DEFAULT_LAMBDA_GRID: [f64; 8] = [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub train: TrainConfig,
    pub threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            hidden_dims: vec![32],
            activation: Activation::Relu,
            train: TrainConfig::default(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Train on `train` (selecting by `val`) with every seed set from `seed`, and
/// report the best checkpoint on `test`.
pub fn run_experiment(
    train_data: &LabelDataset,
    val_data: &LabelDataset,
    test_data: &LabelDataset,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<MetricsReport> {
    let input_dim =
        train_data.features().ok_or_else(|| Error::InvalidInput("training split has no features".into()))?.ncols();
    let model = init_model(&MlpConfig {
        input_dim,
        hidden_dims: cfg.hidden_dims.clone(),
        output_dim: train_data.n_classes(),
        activation: cfg.activation,
        init_seed: derive_seed(seed, "init"),
    })?;
    let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
    let outcome = train(model, train_data, val_data, &train_cfg)?;
    evaluate(&outcome.best_model, test_data, cfg.threshold, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    /// `None` for the alpha = 0 baseline.
    pub lambda: Option<f64>,
    pub seed: u64,
    pub f1: f64,
    pub f2: f64,
    pub map: f64,
    pub f1_neg: f64,
}

impl AblationRow {
    fn from_report(variant: &str, lambda: Option<f64>, seed: u64, r: &MetricsReport) -> Self {
        AblationRow {
            variant: variant.to_string(),
            lambda,
            seed,
            f1: r.macro_f1,
            f2: r.macro_f2,
            map: r.mean_ap,
            f1_neg: r.f1_neg,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

pub const BASELINE_VARIANT: &str = "baseline";
pub const ANY_CLASS_VARIANT: &str = "any";

/// Median with the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        (v[k - 1] + v[k]) / 2.0
    }
}

/// Sweep lambda for the any-class variant of `base.train.loss.family`, plus an
/// alpha = 0 baseline, over seeds `base.train.seed + i`.
///
/// Rows: all baseline seeds first, then each grid value in order with its
/// seeds.
pub fn ablate_lambda(
    train_data: &LabelDataset,
    val_data: &LabelDataset,
    test_data: &LabelDataset,
    base: &ExperimentConfig,
    grid: &[f64],
    n_seeds: usize,
) -> Result<AblationTable> {
    if n_seeds == 0 {
        return Err(Error::InvalidConfig("at least one seed is needed".into()));
    }
    if let Some(l) = grid.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::InvalidConfig(format!("lambda {l} outside [0, 1]")));
    }
    let family: LossFamily = base.train.loss.family.with_any_class();
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| base.train.seed.wrapping_add(i)).collect();

    let mut jobs: Vec<(Option<f64>, u64)> = seeds.iter().map(|&s| (None, s)).collect();
    for &l in grid {
        jobs.extend(seeds.iter().map(|&s| (Some(l), s)));
    }
    let rows = jobs
        .into_par_iter()
        .map(|(lambda, seed)| {
            let mut cfg = base.clone();
            cfg.train.loss.family = family;
            match lambda {
                None => cfg.train.loss.alpha = 0.0,
                Some(l) => cfg.train.loss.lambda = l,
            }
            let report = run_experiment(train_data, val_data, test_data, &cfg, seed)?;
            let variant = if lambda.is_some() { ANY_CLASS_VARIANT } else { BASELINE_VARIANT };
            log::info!("{variant} lambda={lambda:?} seed={seed}: F2 {:.4}", report.macro_f2);
            Ok(AblationRow::from_report(variant, lambda, seed, &report))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable { rows })
}

/// Compare loss families on identical splits and seeds. Rows are grouped by
/// family in the given order; `variant` is the family name.
pub fn compare_families(
    train_data: &LabelDataset,
    val_data: &LabelDataset,
    test_data: &LabelDataset,
    base: &ExperimentConfig,
    families: &[LossFamily],
    n_seeds: usize,
) -> Result<AblationTable> {
    if n_seeds == 0 {
        return Err(Error::InvalidConfig("at least one seed is needed".into()));
    }
    let jobs: Vec<(LossFamily, u64)> =
        families.iter().flat_map(|&f| (0..n_seeds as u64).map(move |i| (f, base.train.seed.wrapping_add(i)))).collect();
    let rows = jobs
        .into_par_iter()
        .map(|(family, seed)| {
            let mut cfg = base.clone();
            cfg.train.loss.family = family;
            let report = run_experiment(train_data, val_data, test_data, &cfg, seed)?;
            let lambda = family.is_any().then_some(cfg.train.loss.lambda);
            Ok(AblationRow::from_report(family.name(), lambda, seed, &report))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianRow {
    pub variant: String,
    pub lambda: Option<f64>,
    pub runs: usize,
    pub f1: f64,
    pub f2: f64,
    pub map: f64,
    pub f1_neg: f64,
}

const ROW_HEADER: [&str; 7] = ["variant", "lambda", "seed", "f1", "f2", "map", "f1_neg"];
const MEDIAN_HEADER: [&str; 7] = ["variant", "lambda", "runs", "f1", "f2", "map", "f1_neg"];

fn fmt_lambda(l: Option<f64>) -> String {
    l.map(|v| v.to_string()).unwrap_or_default()
}

impl AblationTable {
    /// One row per (variant, lambda) in first-appearance order.
    pub fn medians(&self) -> Vec<MedianRow> {
        let mut keys: Vec<(String, Option<f64>)> = Vec::new();
        for r in &self.rows {
            let key = (r.variant.clone(), r.lambda);
            if !keys.iter().any(|k| k.0 == key.0 && k.1.map(f64::to_bits) == key.1.map(f64::to_bits)) {
                keys.push(key);
            }
        }
        keys.into_iter()
            .map(|(variant, lambda)| {
                let group: Vec<&AblationRow> = self
                    .rows
                    .iter()
                    .filter(|r| r.variant == variant && r.lambda.map(f64::to_bits) == lambda.map(f64::to_bits))
                    .collect();
                let col = |f: fn(&AblationRow) -> f64| median(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
                MedianRow {
                    runs: group.len(),
                    f1: col(|r| r.f1),
                    f2: col(|r| r.f2),
                    map: col(|r| r.map),
                    f1_neg: col(|r| r.f1_neg),
                    variant,
                    lambda,
                }
            })
            .collect()
    }

    pub fn median_for(&self, variant: &str, lambda: Option<f64>) -> Option<MedianRow> {
        self.medians()
            .into_iter()
            .find(|m| m.variant == variant && m.lambda.map(f64::to_bits) == lambda.map(f64::to_bits))
    }

    /// Floats are written in shortest round-trip form, so reading the CSV back
    /// reproduces every value exactly.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(ROW_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.variant.clone(),
                fmt_lambda(r.lambda),
                r.seed.to_string(),
                r.f1.to_string(),
                r.f2.to_string(),
                r.map.to_string(),
                r.f1_neg.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_medians_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(MEDIAN_HEADER)?;
        for m in self.medians() {
            w.write_record([
                m.variant,
                fmt_lambda(m.lambda),
                m.runs.to_string(),
                m.f1.to_string(),
                m.f2.to_string(),
                m.map.to_string(),
                m.f1_neg.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        if r.headers()?.iter().ne(ROW_HEADER) {
            return Err(Error::InvalidInput(format!("ablation CSV header must be {}", ROW_HEADER.join(","))));
        }
        let parse = |s: &str, line: usize| -> Result<f64> {
            s.parse().map_err(|_| Error::InvalidInput(format!("line {line}: '{s}' is not a number")))
        };
        let mut rows = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            if rec.len() != ROW_HEADER.len() {
                return Err(Error::InvalidInput(format!("line {line}: expected {} fields", ROW_HEADER.len())));
            }
            rows.push(AblationRow {
                variant: rec[0].to_string(),
                lambda: if rec[1].is_empty() { None } else { Some(parse(&rec[1], line)?) },
                seed: rec[2]
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("line {line}: bad seed '{}'", &rec[2])))?,
                f1: parse(&rec[3], line)?,
                f2: parse(&rec[4], line)?,
                map: parse(&rec[5], line)?,
                f1_neg: parse(&rec[6], line)?,
            });
        }
        Ok(AblationTable { rows })
    }
}
