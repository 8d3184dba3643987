//! Scale-aligned trajectory error, median-scaled depth metrics, and export
//! of trajectories, depth maps and reports.

mod export;
mod metrics;
mod trajectory;

pub use export::{
    depth_false_color, export_artifacts, trajectory_csv, trajectory_svg, Artifacts,
    TRAJECTORY_CSV_HEADER,
};
pub use metrics::{
    ate, depth_metrics, median, rms_residual, spearman, Ate, DepthCap, DepthMetrics, Summary,
    MIN_EVAL_DEPTH,
};
pub use trajectory::{
    accumulate_trajectory, gt_trajectory, predicted_trajectory, predicted_windows,
    window_from_target_poses, Accumulation, Trajectory, ATE_WINDOW,
};
