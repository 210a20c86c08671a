//! Trajectory evaluation: start-aligned segment RMSE against path length for
//! the fused estimate and the two single-sensor baselines.

mod baselines;
mod compare;
mod rmse;

pub use baselines::{evo_only_baseline, magnetic_only_baseline, RollRule};
pub use compare::{
    compare_methods, compare_trajectories, overlay_text, plot_data_text, Comparison, Method,
    PreparedDataset, RmseReport, PROTOCOL,
};
pub use rmse::{
    check_buckets, rmse_by_length, segment_errors, BucketStats, SegmentErrors, DEFAULT_BUCKETS,
};
