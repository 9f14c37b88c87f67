//! Desk-scale MLP training with manual backpropagation through the losses.

mod ablation;
mod mlp;
mod train;

pub use ablation::{
    ablate_lambda, compare_families, median, run_experiment, AblationRow, AblationTable, ExperimentConfig, MedianRow,
    ANY_CLASS_VARIANT, BASELINE_VARIANT, DEFAULT_LAMBDA_GRID,
};
pub use mlp::{init_model, Activation, Dense, ForwardCache, Mlp, MlpConfig, CHECKPOINT_FORMAT_VERSION};
pub use train::{
    evaluate, predict_scores, resolve_loss, train, train_with_observer, ClassBalanceSpec, EpochRecord, TrainConfig,
    TrainOutcome, TrainingLog, ValidationMetric, LOG_FORMAT_VERSION,
};
