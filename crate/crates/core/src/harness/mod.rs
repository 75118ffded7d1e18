//! Metrics, experiment orchestration and window-based estimation.

mod estimate;
mod experiment;
mod metrics;

pub use estimate::{
    cmd_estimate, hurst_series, hurst_windows, read_series_csv, windows_csv, write_windows_csv, zscore,
    HurstOptions, WindowEstimate, WindowSummary, MIN_WINDOW_STD,
};
pub use experiment::{
    evaluate, evaluate_predictions, run_experiment, run_experiment_with_progress, DataConfig, EstimateReport,
    Evaluation, ExperimentConfig, ReplicateReport, REPORT_FORMAT_VERSION,
};
pub use metrics::{average_rmse, average_rse_stats, nearest_rank, per_parameter_rmse, RseStats};
