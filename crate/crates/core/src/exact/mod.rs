//! Exact enumeration for Ising-spin models.

pub mod cavity;
pub mod enumerate;
mod split;
pub mod table;
pub(crate) mod walk;

pub use cavity::{cavity_exact, cavity_fields, CavityExact};
pub use enumerate::{
    enumerate, enumerate_with, exact_marginal, naive_enumerate, overlap_moments, AuxMoments,
    EnumerateOptions, ExactSummary, OverlapMoments, ProjectionProbe, ENUMERATION_CAP,
    MAX_MARGINAL_SITES,
};
pub use table::MarginalTable;
