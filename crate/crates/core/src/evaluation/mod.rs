//! Metrics, cross-validation harness, the benchmark analyses and their
//! CSV/SVG reports.

mod analyses;
mod cv;
mod metrics;
mod report;
mod svg;

pub use analyses::{
    directional_checks, late_bubble_means, loss_ratio_grid, relabel_early, Analysis, DirectionalRow, EvalConfig,
    FittingRow, Harness, KernelRow, LossWeightRow, TrainingSizeRow, TrajectoryRow, PARAMETERS,
};
pub use cv::{
    check_leakage, cross_validate, job_seed, CvOutcome, FailureRow, FoldPrediction, Model, RmspeRow, Split, SummaryRow,
    Variant,
};
pub use metrics::{bubble_score, mean_std, near_zero_rows, pooled_rmspe, rmspe};
pub use report::{composition_line, fingerprint, read_rows, run_evaluation, write_rows, AnalysisStatus, Manifest};
