//! Detection and regression metrics, epsilon-sweep campaigns and report
//! serialization.

pub mod metrics;
pub mod report;
pub mod sweep;

pub use metrics::{mse, pr_auc, pr_curve, roc_auc, roc_curve, PrPoint, RocPoint, ScoredSet};
pub use report::{
    pr_curve_csv, roc_curve_csv, rul_trajectories_csv, signal_dump_csv, ReportMetadata, ReportRow, RobustnessReport,
};
pub use sweep::{
    clean_detection_scores, clean_predictions, detection_metrics, sweep_detection, sweep_prognostics, EpsilonOutcome,
    SweepConfig, SweepOutcome,
};
