//! Local-independence diagnostics: predicted laws, distances, sweeps.

pub mod bound;
pub mod distance;
pub mod fit;
pub mod predict;
pub mod sweep;
pub mod testfn;

pub use bound::{exponent_coefficient, log_abstract_constant, C_EPSILON};
pub use distance::{ks_against, ks_axis, ks_distance, tv_continuous, tv_discrete, tv_histograms};
pub use fit::{fit_slope, ols_loglog, SlopeFit};
pub use predict::{
    e_ge_one_min, predicted_product, sampled_cavity_fields, truncated_rs_inputs, PredictedMarginal,
    PredictionForm, PredictionKind, SiteLaw,
};
pub use testfn::TestFunction;
pub use sweep::{
    check_gap_inputs, concentration_report, concentration_stats, decay_steps, decomposition_gap, full_inputs, gap_disorder, gap_report, li_disorder, li_report, li_sweep,
    projection_constants, projection_disorder, projection_report, projection_test, truncated_inputs, Backend,
    ConcentrationStats, CsvRow, GapPoint, GapRatio, GapReport, LIReport, LiContext, LiRecord, LiSweep, ProjectionRecord,
    ProjectionRow, ProjectionStats, StepCheck, SweepSettings, CSV_HEADER,
};
