//! Markov chain estimation of Gibbs quantities and disorder averaging.

pub mod average;
pub mod chain;
pub mod ess;
pub mod histogram;
pub mod run;

pub use average::{
    aggregate, check_failure_fraction, default_workers, disorder_average, disorder_moments, exact_moments, jackknife, map_disorders, map_indices, moments_of_summary,
    sweep_disorder, ColumnSummary, DisorderAggregate, DisorderRun, Estimate, Estimator, GibbsMoments, MAX_FAILURE_FRACTION, MOMENT_NAMES,
};
pub use chain::{sample_exp_tilt, Chain, ChainConfig};
pub use ess::{batch_means_se, effective_sample_size};
pub use histogram::{bins_for, uniform_edges, MarginalHistogram};
pub use run::{run_chain, run_chain_to_csv, SampleStats, SampledMarginal, TARGET_ACCEPTANCE};
