//! Scoring of detections against annotations.

pub mod cv;
pub mod histogram;
pub mod kappa;
pub mod matching;
pub mod metrics;

pub use cv::{
    cross_validate, fold_assignment, run_fold, score_folds, score_groups, DetectionPipeline,
    FoldDetections, FoldMetrics, LabeledRecording, MetricsReport, DEFAULT_FOLDS,
};
pub use histogram::{distance_histogram, DistanceHistogram};
pub use kappa::fleiss_kappa;
pub use matching::{match_events, MatchConfig, MatchMode, MatchOutcome};
pub use metrics::{compute_metrics, mean_std, MeanStd, MetricSummary, Metrics};
