//! Training, cross-validation, pixel metrics and the ablation report.

mod config;
mod metrics;
mod report;
mod train;

pub use config::{
    AblationConfig, DatasetConfig, ModelConfig, RunConfig, SyntheticConfig, TrainConfig,
};
pub use metrics::{ImageMetrics, MeanStd, MetricSummary, Metrics, PixelConfusion};
pub use report::{run_ablation, AblationReport, ReportColumn, ReportMeta, ROW_LABELS};
pub use train::{
    class_weights, cross_validate, evaluate, make_folds, predict, prepare_samples, train_fold,
    CrossValidation, Fold, FoldResult, PreparedSample, TrainOutcome,
};
