//! Seeded training loops, batching, normalization, metrics and reports.

mod data;
mod metrics;
mod report;
mod trainer;

pub use data::{
    batch_input, pad_batch, AgeScaler, Example, FrameSource, SplitData, Standardizer, Targets,
    STD_FLOOR,
};
pub use metrics::{
    argmax, evaluate_classification, evaluate_regression, ClassificationMetrics,
    RegressionMetrics, TaskMetrics,
};
pub use report::{model_label, run_comparison, stl_specs_for, ComparisonReport, MetricRow, RunResult};
pub use trainer::{
    evaluate, train, AgeLoss, EpochRecord, History, Normalization, TrainConfig, Trained,
};
