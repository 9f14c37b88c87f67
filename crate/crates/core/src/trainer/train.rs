use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Dense, Mlp};
use crate::balance::{effective_weights, ClassCounts, DEFAULT_BETA};
use crate::data::LabelDataset;
use crate::error::{Error, Result};
use crate::losses::{compute_loss, LogitBatch, LossConfig, TargetBatch};
use crate::metrics::{full_report, ClassImportanceWeights, MetricsReport, ScoreBatch};
use crate::numerics::sigmoid;
use crate::seed::derive_seed;

pub const LOG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMetric {
    Map,
    MacroF2,
}

impl ValidationMetric {
    pub fn of(self, report: &MetricsReport) -> f64 {
        match self {
            ValidationMetric::Map => report.mean_ap,
            ValidationMetric::MacroF2 => report.macro_f2,
        }
    }
}

impl std::str::FromStr for ValidationMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "map" => Ok(ValidationMetric::Map),
            "macro_f2" => Ok(ValidationMetric::MacroF2),
            other => Err(Error::InvalidConfig(format!("unknown validation metric '{other}'"))),
        }
    }
}

/// Class balancing computed from the training split at the start of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassBalanceSpec {
    pub beta: f64,
    pub include_negative: bool,
}

impl Default for ClassBalanceSpec {
    fn default() -> Self {
        ClassBalanceSpec { beta: DEFAULT_BETA, include_negative: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// `(epoch, factor)`: from that (0-based) epoch on, the rate is multiplied
    /// by `factor`.
    pub lr_decay: Vec<(usize, f64)>,
    pub loss: LossConfig,
    pub class_balance: Option<ClassBalanceSpec>,
    pub validation_metric: ValidationMetric,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 64,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            lr_decay: vec![(10, 0.1), (15, 0.1)],
            loss: LossConfig::default(),
            class_balance: None,
            validation_metric: ValidationMetric::Map,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be >= 1".into());
        }
        // zero is accepted so a run can be checked to leave parameters untouched
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be finite and >= 0", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay {} must be >= 0", self.weight_decay));
        }
        for (k, &(epoch, factor)) in self.lr_decay.iter().enumerate() {
            if epoch >= self.epochs {
                return bad(format!(
                    "decay epoch {epoch} is not below the epoch count {} (adjust the decay schedule)",
                    self.epochs
                ));
            }
            if k > 0 && epoch <= self.lr_decay[k - 1].0 {
                return bad("decay epochs must be strictly increasing".into());
            }
            if !(factor > 0.0 && factor.is_finite()) {
                return bad(format!("decay factor {factor} must be > 0"));
            }
        }
        if let Some(cb) = &self.class_balance {
            if !(cb.beta >= 0.0 && cb.beta < 1.0) {
                return bad(format!("beta {} outside [0, 1)", cb.beta));
            }
        }
        self.loss.validate()
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.lr_decay.iter().filter(|(e, _)| *e <= epoch).fold(self.learning_rate, |lr, (_, f)| lr * f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Instance-weighted mean of the batch losses.
    pub train_loss: f64,
    pub validation: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub format_version: u32,
    pub validation_metric: ValidationMetric,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    /// Where the final checkpoint was written, when the caller saved one.
    pub checkpoint: Option<String>,
}

impl TrainingLog {
    fn new(metric: ValidationMetric) -> Self {
        TrainingLog {
            format_version: LOG_FORMAT_VERSION,
            validation_metric: metric,
            epochs: Vec::new(),
            best_epoch: None,
            checkpoint: None,
        }
    }

    pub const CSV_HEADER: [&'static str; 9] = [
        "epoch",
        "learning_rate",
        "train_loss",
        "val_macro_f1",
        "val_macro_f2",
        "val_map",
        "val_f1_neg",
        "val_f2_ciw",
        "best",
    ];

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for r in &self.epochs {
            let v = &r.validation;
            w.write_record([
                r.epoch.to_string(),
                r.learning_rate.to_string(),
                r.train_loss.to_string(),
                v.macro_f1.to_string(),
                v.macro_f2.to_string(),
                v.mean_ap.to_string(),
                v.f1_neg.to_string(),
                v.f2_ciw.map(|x| x.to_string()).unwrap_or_default(),
                u8::from(self.best_epoch == Some(r.epoch)).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        std::fs::write(json_path, self.to_json()?).map_err(|e| Error::io(json_path, e))?;
        let f = std::fs::File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: TrainingLog,
    pub best_model: Mlp,
    pub final_model: Mlp,
}

/// SGD with momentum and coupled weight decay, in the usual framework form:
/// `g += wd * p; v = mu * v + g; p -= lr * v`.
struct Sgd {
    momentum: f64,
    weight_decay: f64,
    velocity: Vec<Dense>,
}

impl Sgd {
    fn new(model: &Mlp, momentum: f64, weight_decay: f64) -> Self {
        let velocity = model
            .layers()
            .iter()
            .map(|l| Dense {
                weights: Array2::zeros(l.weights.raw_dim()),
                bias: ndarray::Array1::zeros(l.bias.raw_dim()),
            })
            .collect();
        Sgd { momentum, weight_decay, velocity }
    }

    fn step(&mut self, model: &mut Mlp, grads: &[Dense], lr: f64) {
        let (mu, wd) = (self.momentum, self.weight_decay);
        for ((layer, grad), vel) in model.layers_mut().iter_mut().zip(grads).zip(&mut self.velocity) {
            let update = |p: &mut f64, g: f64, v: &mut f64| {
                let g = g + wd * *p;
                *v = mu * *v + g;
                *p -= lr * *v;
            };
            ndarray::Zip::from(&mut layer.weights)
                .and(&grad.weights)
                .and(&mut vel.weights)
                .for_each(|p, &g, v| update(p, g, v));
            ndarray::Zip::from(&mut layer.bias).and(&grad.bias).and(&mut vel.bias).for_each(|p, &g, v| update(p, g, v));
        }
    }
}

fn features_of(data: &LabelDataset) -> Result<&Array2<f64>> {
    data.features()
        .ok_or_else(|| Error::InvalidInput("dataset has no feature matrix; training and evaluation need one".into()))
}

/// Loss configuration with balancing weights filled in from `train`.
pub fn resolve_loss(train: &LabelDataset, cfg: &TrainConfig) -> Result<LossConfig> {
    let mut loss = cfg.loss.clone();
    if let Some(cb) = &cfg.class_balance {
        let counts = ClassCounts::from_labels(train.labels().view())?;
        let include_negative = cb.include_negative && counts.negative > 0;
        if cb.include_negative && !include_negative {
            log::warn!("training split has no negative instances; balancing without a negative category");
        }
        if !cb.include_negative && counts.negative > 0 {
            return Err(Error::InvalidConfig(
                "training split contains negative instances; class balancing needs include_negative".into(),
            ));
        }
        loss.balance = Some(effective_weights(&counts, cb.beta, include_negative)?);
    }
    Ok(loss)
}

/// Sigmoid scores on a dataset's features.
pub fn predict_scores(model: &Mlp, data: &LabelDataset) -> Result<ScoreBatch> {
    let logits = model.forward(features_of(data)?.view())?;
    ScoreBatch::new(logits.values().mapv(sigmoid))
}

pub fn evaluate(
    model: &Mlp,
    data: &LabelDataset,
    tau: f64,
    ciw: Option<&ClassImportanceWeights>,
) -> Result<MetricsReport> {
    let scores = predict_scores(model, data)?;
    full_report(&scores, &data.targets()?, tau, ciw)
}

pub fn train(
    model: Mlp,
    train_data: &LabelDataset,
    val_data: &LabelDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_observer(model, train_data, val_data, cfg, |_, _| Ok(()))
}

/// Like [`train`], calling `observer` with the log and current model after
/// every epoch (used to persist progress incrementally).
pub fn train_with_observer<F>(
    mut model: Mlp,
    train_data: &LabelDataset,
    val_data: &LabelDataset,
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&TrainingLog, &Mlp) -> Result<()>,
{
    cfg.validate()?;
    let x = features_of(train_data)?;
    features_of(val_data)?;
    if train_data.is_empty() {
        return Err(Error::InvalidInput("training split is empty".into()));
    }
    if model.output_dim() != train_data.n_classes() || val_data.n_classes() != train_data.n_classes() {
        return Err(Error::InvalidInput(format!(
            "model outputs {} classes; train has {}, validation {}",
            model.output_dim(),
            train_data.n_classes(),
            val_data.n_classes()
        )));
    }
    let loss_cfg = resolve_loss(train_data, cfg)?;
    let labels = train_data.labels();
    let n = train_data.len();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "shuffle"));
    let mut opt = Sgd::new(&model, cfg.momentum, cfg.weight_decay);
    let mut log = TrainingLog::new(cfg.validation_metric);
    let mut best: Option<(f64, Mlp)> = None;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let xb = x.select(Axis(0), idx);
            let yb = TargetBatch::new(labels.select(Axis(0), idx))?;
            let (raw, cache) = model.forward_cached(xb.view())?;
            let non_finite = |max_logit| Error::NonFiniteLoss { epoch, batch: b, max_logit };
            let max_logit = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let logits = LogitBatch::new(raw).map_err(|_| non_finite(max_logit))?;
            let result = compute_loss(&logits, &yb, &loss_cfg)?;
            if !result.total.is_finite() {
                return Err(non_finite(max_logit));
            }
            loss_sum += result.total * idx.len() as f64;
            let grad_out = result.grad_logits / idx.len() as f64;
            let grads = model.backward(&cache, &grad_out);
            opt.step(&mut model, &grads, lr);
            // an overflowing step only shows up in the next forward pass,
            // which may be validation; catch it here with the batch it came from
            if !model.layers().iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite())) {
                return Err(non_finite(max_logit));
            }
        }

        let validation = evaluate(&model, val_data, crate::metrics::DEFAULT_THRESHOLD, None)?;
        let score = cfg.validation_metric.of(&validation);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, model.clone()));
            log.best_epoch = Some(epoch);
        }
        log.epochs.push(EpochRecord { epoch, learning_rate: lr, train_loss: loss_sum / n as f64, validation });
        log::debug!("epoch {epoch}: loss {:.6}, {:?} {score:.6}", loss_sum / n as f64, cfg.validation_metric);
        observer(&log, &model)?;
    }

    let best_model = best.map(|(_, m)| m).unwrap_or_else(|| model.clone());
    Ok(TrainOutcome { log, best_model, final_model: model })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::mlp::{init_model, Activation, MlpConfig};

    #[test]
    fn decay_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate_at(0), 0.05);
        assert_eq!(cfg.learning_rate_at(9), 0.05);
        assert!((cfg.learning_rate_at(10) - 0.005).abs() < 1e-15);
        assert!((cfg.learning_rate_at(19) - 0.0005).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad_decay = TrainConfig { lr_decay: vec![(5, 0.1), (5, 0.1)], ..TrainConfig::default() };
        assert!(bad_decay.validate().is_err());
        let late = TrainConfig { lr_decay: vec![(20, 0.1)], ..TrainConfig::default() };
        assert!(late.validate().is_err());
        let momentum = TrainConfig { momentum: 1.0, ..TrainConfig::default() };
        assert!(momentum.validate().is_err());
    }

    #[test]
    fn evaluate_all_negative_model() {
        let labels = ndarray::array![[1u8, 0], [0, 0], [0, 1], [0, 0]];
        let features = Array2::from_elem((4, 3), 1.0);
        let ds = LabelDataset::new(
            (0..4).map(|i| i.to_string()).collect(),
            None,
            labels,
            vec!["a".into(), "b".into()],
            Some(features),
        )
        .unwrap();
        let mut model = init_model(&MlpConfig {
            input_dim: 3,
            hidden_dims: vec![],
            output_dim: 2,
            activation: Activation::Relu,
            init_seed: 0,
        })
        .unwrap();
        let mut p = vec![0.0; model.parameter_count()];
        let n = p.len();
        p[n - 2..].iter_mut().for_each(|b| *b = -50.0);
        model.set_parameters(&p).unwrap();
        let r = evaluate(&model, &ds, 0.5, None).unwrap();
        // predicting "nothing" everywhere: tp = 2, fp = 2, fn = 0
        assert!((r.f1_neg - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.macro_f1, 0.0);
        assert_eq!(r, evaluate(&model, &ds, 0.5, None).unwrap());
    }
}
