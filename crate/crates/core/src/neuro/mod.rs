//! Voxel-wise regression of BOLD signals on HRF-convolved regressors.

mod design;
mod glm;
mod hrf;
mod panel;
mod pipeline;
mod stats;

pub use design::{convolve_and_sample, DesignMatrix, EventSeries, SeriesKind, INTERCEPT};
pub use glm::{cv_r2, ols, r2_increase, section_ranges};
pub use hrf::{hrf_kernel, hrf_value, HrfSpec};
pub use panel::{BoldPanel, BOLD_MAGIC};
pub use stats::{
    cluster_threshold, dice, paired_t_map, t_to_z, z_threshold, Cluster, ClusterTable, Grid, TMap,
};
pub use pipeline::{
    check_panels, control_design, event_column, run_regression, ControlInputs, RegressionOutput,
};
