//! Multi-label classification losses built around an any-class presence
//! likelihood, plus the metrics, dataset tooling and a small MLP trainer
//! needed to compare them against their standard counterparts.

pub mod balance;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod numerics;
pub mod seed;
pub mod trainer;

pub use balance::{count_labels, effective_weights, BalanceWeights, ClassCounts};
pub use data::{LabelDataset, SplitSpec, SyntheticConfig};
pub use error::{Error, Result};
pub use losses::{LogitBatch, LossConfig, LossFamily, LossResult, TargetBatch};
pub use metrics::{ClassImportanceWeights, MetricsReport, ScoreBatch};
