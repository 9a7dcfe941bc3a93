//! Splits, metrics, cross-validation and report output.

mod cv;
mod metrics;
mod report;
mod split;

pub use cv::{
    cross_validate, cross_validate_with, subject_images, Aggregation, CaePipeline, CnnPipeline, CvOptions, EvalData,
    EvalReport, FeaturePipeline, FoldAssignment, FoldScores, MetricSummary, ModelReport, Pipeline, Prediction,
    SplitMode, VALIDATION_SHARE,
};
pub use metrics::{
    cohens_kappa, confusion, metrics, roc_auc, roc_auc_trapezoid, roc_curve, ConfusionMatrix, Kappa, Metrics,
};
pub use report::{report_csv, write_report};
pub use split::{holdout_split, kfold, kfold_stratified, Fold, Holdout, HOLDOUT_FRACTIONS};
