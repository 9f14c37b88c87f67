//! Multi-label losses and their analytic gradients with respect to the logits.
//!
//! Four families share one per-instance kernel:
//!
//! | family      | per-instance loss                                               |
//! |-------------|-----------------------------------------------------------------|
//! | `Bce`       | `sum_j -log p_j^t`                                              |
//! | `Focal`     | `sum_j -(1 - p_j^t)^g log p_j^t`                                |
//! | `AnyBce`    | `Bce + a * (-log p_a^t)`                                        |
//! | `AnyFocal`  | `Focal + a * (-(1 - p_a^t)^g log p_a^t)`                        |
//!
//! `p_a` is the normalized weighted geometric mean of the class probabilities,
//! with weight 1 for present classes and `lambda` for absent ones. It is never
//! formed in probability space: it equals `sigmoid(z*)` where `z*` is the
//! weighted mean of the logits (see [`any_class_logit`]), so every term is a
//! softplus of a signed logit and no epsilon clamping is needed.
//!
//! `grad_logits[i][j]` is the derivative of `per_instance[i]` with respect to
//! `z_ij`. The gradient of the batch mean is therefore `grad_logits / N`.

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::BalanceWeights;
use crate::error::{Error, Result};
use crate::numerics::{logit, sigmoid, softplus};

/// Rows per rayon task; smaller batches are evaluated inline.
const PAR_MIN_ROWS: usize = 128;

/// Raw scores, one row per instance, one column per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitBatch(Array2<f64>);

impl LogitBatch {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "logit batch must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("logit [{i}, {j}] = {v} is not finite")));
        }
        Ok(LogitBatch(values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows_to_array(rows)?)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }
}

/// Binary labels, same layout as [`LogitBatch`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetBatch(Array2<u8>);

impl TargetBatch {
    pub fn new(values: Array2<u8>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "target batch must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| **v > 1) {
            return Err(Error::InvalidInput(format!("target [{i}, {j}] = {v} is not binary")));
        }
        Ok(TargetBatch(values))
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        Self::new(rows_to_array(rows)?)
    }

    pub fn values(&self) -> &Array2<u8> {
        &self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }
}

fn rows_to_array<T: Copy>(rows: &[Vec<T>]) -> Result<Array2<T>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidInput("ragged rows".into()));
    }
    let flat: Vec<T> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat).map_err(|e| Error::InvalidInput(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    Bce,
    Focal,
    AnyBce,
    AnyFocal,
}

impl LossFamily {
    pub const ALL: [LossFamily; 4] = [LossFamily::Bce, LossFamily::Focal, LossFamily::AnyBce, LossFamily::AnyFocal];

    pub fn is_any(self) -> bool {
        matches!(self, LossFamily::AnyBce | LossFamily::AnyFocal)
    }

    pub fn is_focal(self) -> bool {
        matches!(self, LossFamily::Focal | LossFamily::AnyFocal)
    }

    /// The standard family this one extends (identity for standard families).
    pub fn base(self) -> LossFamily {
        match self {
            LossFamily::Bce | LossFamily::AnyBce => LossFamily::Bce,
            LossFamily::Focal | LossFamily::AnyFocal => LossFamily::Focal,
        }
    }

    /// The any-class variant of this family.
    pub fn with_any_class(self) -> LossFamily {
        match self {
            LossFamily::Bce | LossFamily::AnyBce => LossFamily::AnyBce,
            LossFamily::Focal | LossFamily::AnyFocal => LossFamily::AnyFocal,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossFamily::Bce => "bce",
            LossFamily::Focal => "focal",
            LossFamily::AnyBce => "any_bce",
            LossFamily::AnyFocal => "any_focal",
        }
    }
}

impl std::fmt::Display for LossFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown loss family '{s}'")))
    }
}

/// All loss hyperparameters. `gamma` is ignored by the BCE families, `alpha`
/// and `lambda` by the standard ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub family: LossFamily,
    pub alpha: f64,
    pub lambda: f64,
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balance: Option<BalanceWeights>,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { family: LossFamily::AnyBce, alpha: 1.0, lambda: 0.02, gamma: 2.0, balance: None }
    }
}

impl LossConfig {
    pub fn new(family: LossFamily) -> Self {
        LossConfig { family, ..LossConfig::default() }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_balance(mut self, balance: Option<BalanceWeights>) -> Self {
        self.balance = balance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("gamma {} must be finite and >= 0", self.gamma)));
        }
        Ok(())
    }

    /// Focusing exponent actually applied (zero for the BCE families).
    fn effective_gamma(&self) -> f64 {
        if self.family.is_focal() {
            self.gamma
        } else {
            0.0
        }
    }
}

/// Batch loss, per-instance losses and per-instance logit gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub total: f64,
    pub per_instance: Array1<f64>,
    pub grad_logits: Array2<f64>,
}

/// `y_a` per row: 1 when at least one class is present.
pub fn any_class_target(targets: &TargetBatch) -> Array1<u8> {
    targets.values().rows().into_iter().map(|row| u8::from(row.iter().any(|&y| y == 1))).collect()
}

/// Synthesized any-class logit `z*` for one instance.
///
/// Positive rows: `sum_j w_j z_j / sum_j w_j` with `w_j = 1` for present
/// classes and `lambda` for absent ones. Negative rows: the plain mean of the
/// logits, since all weights equal `lambda` and cancel.
pub fn any_class_logit(logits: &[f64], targets: &[u8], lambda: f64) -> Result<f64> {
    if logits.len() != targets.len() || logits.is_empty() {
        return Err(Error::InvalidInput(format!(
            "logit row of length {} paired with target row of length {}",
            logits.len(),
            targets.len()
        )));
    }
    Ok(weighted_mean_logit(ArrayView1::from(logits), ArrayView1::from(targets), lambda)?.0)
}

/// `p_a = sigmoid(z*)`.
pub fn any_class_probability(logits: &[f64], targets: &[u8], lambda: f64) -> Result<f64> {
    any_class_logit(logits, targets, lambda).map(sigmoid)
}

/// Returns `(z*, sum of weights, positive?)`. For negative rows the weight sum
/// is reported as `M` so that `w_j / sum = 1 / M`.
fn weighted_mean_logit(z: ArrayView1<f64>, y: ArrayView1<u8>, lambda: f64) -> Result<(f64, f64, bool)> {
    let positive = y.iter().any(|&v| v == 1);
    if !positive {
        let m = z.len() as f64;
        let sum = z.iter().fold(0.0, |acc, &v| acc + v);
        return Ok((sum / m, m, false));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (&zj, &yj) in z.iter().zip(y.iter()) {
        let w = if yj == 1 { 1.0 } else { lambda };
        num += w * zj;
        den += w;
    }
    if den <= 0.0 {
        return Err(Error::InvalidConfig("any-class weights sum to zero".into()));
    }
    Ok((num / den, den, true))
}

/// Value and derivative (w.r.t. `u`) of `(1 - sigmoid(u))^gamma * softplus(-u)`,
/// i.e. the focal term `-(1 - p_t)^gamma log p_t` with `p_t = sigmoid(u)`.
/// `gamma == 0` is the cross-entropy term.
#[inline]
fn focal_term(u: f64, gamma: f64) -> (f64, f64) {
    let ce = softplus(-u);
    let q = sigmoid(-u); // 1 - p_t
    if gamma == 0.0 {
        return (ce, -q);
    }
    // (1 - p_t)^gamma = exp(gamma * log sigmoid(-u))
    let modulator = (-gamma * softplus(u)).exp();
    let p_t = sigmoid(u);
    let value = modulator * ce;
    let deriv = -gamma * p_t * modulator * ce - modulator * q;
    (value, deriv)
}

/// Per-instance loss and gradient row, before class balancing.
fn instance_loss(z: ArrayView1<f64>, y: ArrayView1<u8>, cfg: &LossConfig, mut grad: ArrayViewMut1<f64>) -> Result<f64> {
    let gamma = cfg.effective_gamma();
    let mut loss = 0.0;
    for ((&zj, &yj), g) in z.iter().zip(y.iter()).zip(grad.iter_mut()) {
        let sign = if yj == 1 { 1.0 } else { -1.0 };
        let (v, d) = focal_term(sign * zj, gamma);
        loss += v;
        *g = sign * d;
    }

    if cfg.family.is_any() && cfg.alpha != 0.0 {
        let (z_star, weight_sum, positive) = weighted_mean_logit(z, y, cfg.lambda)?;
        let sign = if positive { 1.0 } else { -1.0 };
        let (v, d) = focal_term(sign * z_star, gamma);
        loss += cfg.alpha * v;
        let upstream = cfg.alpha * sign * d;
        for (g, &yj) in grad.iter_mut().zip(y.iter()) {
            let w = if !positive || yj == 1 { 1.0 } else { cfg.lambda };
            *g += upstream * (w / weight_sum);
        }
    }
    Ok(loss)
}

fn check_shapes(logits: &LogitBatch, targets: &TargetBatch) -> Result<()> {
    if logits.values().dim() != targets.values().dim() {
        return Err(Error::InvalidInput(format!(
            "logits {:?} and targets {:?} differ in shape",
            logits.values().dim(),
            targets.values().dim()
        )));
    }
    Ok(())
}

fn mean(values: &Array1<f64>) -> f64 {
    values.iter().fold(0.0, |acc, &v| acc + v) / values.len() as f64
}

/// Evaluate the configured loss on a batch, applying class balancing when
/// `cfg.balance` is set.
///
/// Rows may be evaluated on the rayon pool; results are assembled in input
/// order and the batch mean is a fixed left-to-right sum, so the output is
/// bit-identical for any thread count.
pub fn compute_loss(logits: &LogitBatch, targets: &TargetBatch, cfg: &LossConfig) -> Result<LossResult> {
    cfg.validate()?;
    check_shapes(logits, targets)?;
    let (n, m) = logits.values().dim();
    let mut grad = Array2::<f64>::zeros((n, m));
    let mut per_instance = Array1::<f64>::zeros(n);

    let z = logits.values();
    let y = targets.values();
    let row_job = |(i, (g, l)): (usize, (ArrayViewMut1<f64>, &mut f64))| -> Result<()> {
        *l = instance_loss(z.row(i), y.row(i), cfg, g)?;
        Ok(())
    };
    if n >= 2 * PAR_MIN_ROWS && rayon::current_num_threads() > 1 {
        let rows: Vec<_> = grad.axis_iter_mut(Axis(0)).zip(per_instance.iter_mut()).enumerate().collect();
        rows.into_par_iter().with_min_len(PAR_MIN_ROWS).map(row_job).collect::<Result<Vec<()>>>()?;
    } else {
        grad.axis_iter_mut(Axis(0)).zip(per_instance.iter_mut()).enumerate().try_for_each(row_job)?;
    }

    let result = LossResult { total: mean(&per_instance), per_instance, grad_logits: grad };
    match &cfg.balance {
        Some(weights) => apply_class_balance(result, targets, weights),
        None => Ok(result),
    }
}

pub fn bce_loss(logits: &LogitBatch, targets: &TargetBatch) -> Result<LossResult> {
    compute_loss(logits, targets, &LossConfig::new(LossFamily::Bce))
}

pub fn focal_loss(logits: &LogitBatch, targets: &TargetBatch, gamma: f64) -> Result<LossResult> {
    compute_loss(logits, targets, &LossConfig::new(LossFamily::Focal).with_gamma(gamma))
}

pub fn any_bce_loss(logits: &LogitBatch, targets: &TargetBatch, alpha: f64, lambda: f64) -> Result<LossResult> {
    compute_loss(logits, targets, &LossConfig::new(LossFamily::AnyBce).with_alpha(alpha).with_lambda(lambda))
}

pub fn any_focal_loss(
    logits: &LogitBatch,
    targets: &TargetBatch,
    alpha: f64,
    lambda: f64,
    gamma: f64,
) -> Result<LossResult> {
    compute_loss(
        logits,
        targets,
        &LossConfig::new(LossFamily::AnyFocal).with_alpha(alpha).with_lambda(lambda).with_gamma(gamma),
    )
}

/// Scale each instance's loss and gradient row by its cumulative balancing
/// weight (sum of present-class weights, or the negative-category weight for
/// all-zero rows) and re-average.
pub fn apply_class_balance(
    mut result: LossResult,
    targets: &TargetBatch,
    weights: &BalanceWeights,
) -> Result<LossResult> {
    if result.grad_logits.dim() != targets.values().dim() {
        return Err(Error::InvalidInput("loss result and targets differ in shape".into()));
    }
    if weights.per_class.len() != targets.ncols() {
        return Err(Error::InvalidConfig(format!(
            "balance weights cover {} classes, targets have {}",
            weights.per_class.len(),
            targets.ncols()
        )));
    }
    for (i, y) in targets.values().rows().into_iter().enumerate() {
        let scale = weights.instance_weight(y)?;
        result.per_instance[i] *= scale;
        result.grad_logits.row_mut(i).mapv_inplace(|g| g * scale);
    }
    result.total = mean(&result.per_instance);
    Ok(result)
}

/// Which likelihood to draw over the two-class probability square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceCase {
    /// Product of per-class likelihoods.
    Bce,
    /// Any-class presence likelihood `p_a^t` alone.
    Any,
    /// Product of both, the any-class factor raised to `alpha`.
    Redesigned,
}

impl std::str::FromStr for SurfaceCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bce" => Ok(SurfaceCase::Bce),
            "any" => Ok(SurfaceCase::Any),
            "redesigned" => Ok(SurfaceCase::Redesigned),
            other => Err(Error::InvalidInput(format!("unknown surface case '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub p1: f64,
    pub p2: f64,
    pub value: f64,
}

/// Grid margin: the surface is sampled on `[EPS, 1 - EPS]^2`.
pub const SURFACE_EPS: f64 = 1e-6;

/// Likelihood `exp(-loss)` at a single point of the two-class square.
pub fn likelihood_at(case: SurfaceCase, targets: [u8; 2], lambda: f64, alpha: f64, p1: f64, p2: f64) -> Result<f64> {
    if targets.iter().any(|&t| t > 1) {
        return Err(Error::InvalidInput(format!("targets {targets:?} are not binary")));
    }
    for p in [p1, p2] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidInput(format!("probability {p} not in (0, 1)")));
        }
    }
    let z = [logit(p1), logit(p2)];
    let cfg = LossConfig { family: LossFamily::AnyBce, alpha, lambda, gamma: 0.0, balance: None };
    cfg.validate()?;
    let zv = ArrayView1::from(&z);
    let yv = ArrayView1::from(&targets);
    let bce: f64 = z.iter().zip(&targets).map(|(&zj, &yj)| softplus(if yj == 1 { -zj } else { zj })).sum();
    let (z_star, _, positive) = weighted_mean_logit(zv, yv, lambda)?;
    let any = softplus(if positive { -z_star } else { z_star });
    let loss = match case {
        SurfaceCase::Bce => bce,
        SurfaceCase::Any => any,
        SurfaceCase::Redesigned => bce + alpha * any,
    };
    Ok((-loss).exp())
}

/// Sample the likelihood on a `resolution x resolution` uniform grid over
/// `[EPS, 1 - EPS]^2`, `p1` varying slowest.
pub fn likelihood_surface_grid(
    case: SurfaceCase,
    targets: [u8; 2],
    lambda: f64,
    alpha: f64,
    resolution: usize,
) -> Result<Vec<SurfacePoint>> {
    if resolution < 2 {
        return Err(Error::InvalidInput(format!("resolution {resolution} < 2")));
    }
    let step = (1.0 - 2.0 * SURFACE_EPS) / (resolution - 1) as f64;
    let axis: Vec<f64> = (0..resolution).map(|k| SURFACE_EPS + k as f64 * step).collect();
    let mut out = Vec::with_capacity(resolution * resolution);
    for &p1 in &axis {
        for &p2 in &axis {
            out.push(SurfacePoint { p1, p2, value: likelihood_at(case, targets, lambda, alpha, p1, p2)? });
        }
    }
    Ok(out)
}
