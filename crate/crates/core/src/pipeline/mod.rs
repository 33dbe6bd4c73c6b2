//! Experiment procedures: dataset distances, source selection, scratch,
//! transfer, grid-search and leave-one-out runs, metrics and CSV reports.

pub mod distance;
pub mod metrics;
pub mod report;
pub mod runs;

pub use distance::{argmin_by_name, distance_matrix, eligible_sources, select_source, DistanceReport, Selection};
pub use metrics::{convergence_speedup, median, relative_improvement};
pub use report::{
    build_comparison, write_reports, ComparisonReport, ComparisonRow, DEFAULT_SPEEDUP_THRESHOLD, GAP_MARGIN,
};
pub use runs::{
    evaluate_transfer, grid_search_oracle, loo_pretrain_run, ot_transfer_run, scratch_run, LooResult,
    OracleResult, RunMode, RunResult,
};
