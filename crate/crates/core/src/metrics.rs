//! Threshold and ranking metrics for multi-label predictions.
//!
//! Conventions:
//! - a class is predicted present when its probability is `>= tau`;
//! - precision, recall and F-beta are 0 when their denominator is 0;
//! - average precision is non-interpolated (mean precision at each positive,
//!   scores sorted descending, ties kept in original index order); classes
//!   without positives are left out of mAP.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::TargetBatch;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Predicted probabilities, validated to lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBatch(Array2<f64>);

impl ScoreBatch {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("score [{i}, {j}] = {v} outside [0, 1]")));
        }
        Ok(ScoreBatch(values))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }
}

/// Per-class importance weights used by F2-CIW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassImportanceWeights(Vec<f64>);

impl ClassImportanceWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig("importance weights must be finite and >= 0".into()));
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::InvalidConfig("importance weights are all zero".into()));
        }
        Ok(ClassImportanceWeights(weights))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub fbeta: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f2: f64,
    /// `None` when the class has no positives in the evaluated data.
    pub average_precision: Option<f64>,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub macro_f2: f64,
    pub f2_ciw: Option<f64>,
    pub mean_ap: f64,
    pub f1_neg: f64,
    /// Fraction of all-zero target rows.
    pub negative_fraction: f64,
    /// Classes left out of `mean_ap` for lack of positives.
    pub ap_excluded: Vec<usize>,
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("threshold {tau} outside (0, 1)")))
    }
}

fn check_shapes(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::InvalidInput(format!("shape {a:?} does not match {b:?}")));
    }
    Ok(())
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn fbeta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / den
    }
}

pub fn threshold_predictions(scores: &ScoreBatch, tau: f64) -> Result<Array2<u8>> {
    check_tau(tau)?;
    Ok(scores.values().mapv(|p| u8::from(p >= tau)))
}

/// Precision, recall and F-beta per class.
pub fn fbeta_per_class(preds: &Array2<u8>, targets: &TargetBatch, beta: f64) -> Result<Vec<ClassScore>> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidConfig(format!("F-beta beta {beta} must be > 0")));
    }
    check_shapes(preds.dim(), targets.values().dim())?;
    let scores = preds
        .axis_iter(Axis(1))
        .zip(targets.values().axis_iter(Axis(1)))
        .map(|(p, t)| {
            let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
            for (&pi, &ti) in p.iter().zip(t.iter()) {
                match (pi == 1, ti == 1) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            ClassScore { precision, recall, fbeta: fbeta(precision, recall, beta), tp, fp, fn_ }
        })
        .collect();
    Ok(scores)
}

/// Importance-weighted mean of per-class F2.
pub fn f2_ciw(per_class_f2: &[f64], ciw: &ClassImportanceWeights) -> Result<f64> {
    if per_class_f2.len() != ciw.weights().len() {
        return Err(Error::InvalidInput(format!(
            "{} F2 values but {} importance weights",
            per_class_f2.len(),
            ciw.weights().len()
        )));
    }
    let (num, den) = per_class_f2.iter().zip(ciw.weights()).fold((0.0, 0.0), |(n, d), (&f, &w)| (n + w * f, d + w));
    Ok(num / den)
}

/// Non-interpolated average precision of one class column.
pub fn average_precision(scores: ArrayView1<f64>, targets: ArrayView1<u8>) -> Result<f64> {
    if scores.len() != targets.len() {
        return Err(Error::InvalidInput("score and target columns differ in length".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable: equal scores keep index order
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0u64;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if targets[i] == 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::UndefinedMetric("average precision of a class with no positives".into()));
    }
    Ok(sum / hits as f64)
}

/// F1 of the instance-level "no class present" decision. An instance is
/// predicted negative when every probability is below `tau`.
pub fn f1_negative(scores: &ScoreBatch, targets: &TargetBatch, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    check_shapes(scores.values().dim(), targets.values().dim())?;
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (s, t) in scores.values().rows().into_iter().zip(targets.values().rows()) {
        let predicted_neg = s.iter().all(|&p| p < tau);
        let actual_neg = t.iter().all(|&y| y == 0);
        match (predicted_neg, actual_neg) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(fbeta(ratio(tp, tp + fp), ratio(tp, tp + fn_), 1.0))
}

fn arithmetic_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Every metric at once.
pub fn full_report(
    scores: &ScoreBatch,
    targets: &TargetBatch,
    tau: f64,
    ciw: Option<&ClassImportanceWeights>,
) -> Result<MetricsReport> {
    check_shapes(scores.values().dim(), targets.values().dim())?;
    let preds = threshold_predictions(scores, tau)?;
    let f1 = fbeta_per_class(&preds, targets, 1.0)?;
    let f2 = fbeta_per_class(&preds, targets, 2.0)?;

    let mut per_class = Vec::with_capacity(f1.len());
    let mut ap_excluded = Vec::new();
    for (j, (a, b)) in f1.iter().zip(&f2).enumerate() {
        let column = targets.values().column(j);
        let ap = match average_precision(scores.values().column(j), column) {
            Ok(ap) => Some(ap),
            Err(Error::UndefinedMetric(_)) => {
                log::warn!("class {j} has no positives; excluded from mAP and scored F-beta = 0");
                ap_excluded.push(j);
                None
            }
            Err(e) => return Err(e),
        };
        per_class.push(ClassMetrics {
            precision: a.precision,
            recall: a.recall,
            f1: a.fbeta,
            f2: b.fbeta,
            average_precision: ap,
            tp: a.tp,
            fp: a.fp,
            fn_: a.fn_,
            support: a.tp + a.fn_,
        });
    }

    let f2_values: Vec<f64> = per_class.iter().map(|c| c.f2).collect();
    let n = targets.nrows();
    let negatives = targets.values().rows().into_iter().filter(|r| r.iter().all(|&y| y == 0)).count();
    Ok(MetricsReport {
        threshold: tau,
        macro_f1: arithmetic_mean(per_class.iter().map(|c| c.f1)),
        macro_f2: arithmetic_mean(f2_values.iter().copied()),
        f2_ciw: ciw.map(|w| f2_ciw(&f2_values, w)).transpose()?,
        mean_ap: arithmetic_mean(per_class.iter().filter_map(|c| c.average_precision)),
        f1_neg: f1_negative(scores, targets, tau)?,
        negative_fraction: negatives as f64 / n as f64,
        per_class,
        ap_excluded,
    })
}

impl MetricsReport {
    pub const CSV_HEADER: [&'static str; 7] =
        ["threshold", "macro_f1", "macro_f2", "f2_ciw", "mean_ap", "f1_neg", "negative_fraction"];

    pub const CLASS_CSV_HEADER: [&'static str; 10] =
        ["class", "precision", "recall", "f1", "f2", "average_precision", "tp", "fp", "fn", "support"];

    /// Scalar metrics as one CSV record matching [`Self::CSV_HEADER`]; an
    /// absent F2-CIW is an empty field.
    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.threshold.to_string(),
            self.macro_f1.to_string(),
            self.macro_f2.to_string(),
            self.f2_ciw.map(|v| v.to_string()).unwrap_or_default(),
            self.mean_ap.to_string(),
            self.f1_neg.to_string(),
            self.negative_fraction.to_string(),
        ]
    }

    /// Per-class block matching [`Self::CLASS_CSV_HEADER`].
    pub fn class_csv_rows(&self, class_names: &[String]) -> Vec<Vec<String>> {
        self.per_class
            .iter()
            .enumerate()
            .map(|(j, c)| {
                vec![
                    class_names.get(j).cloned().unwrap_or_else(|| j.to_string()),
                    c.precision.to_string(),
                    c.recall.to_string(),
                    c.f1.to_string(),
                    c.f2.to_string(),
                    c.average_precision.map(|v| v.to_string()).unwrap_or_default(),
                    c.tp.to_string(),
                    c.fp.to_string(),
                    c.fn_.to_string(),
                    c.support.to_string(),
                ]
            })
            .collect()
    }
}
