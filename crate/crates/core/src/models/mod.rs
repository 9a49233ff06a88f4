//! The four Hamiltonians, their disorder, and cavity decompositions.

pub mod cavity;
pub mod config;
pub mod disorder;
pub mod energy;
pub mod potential;
pub mod spec;

pub use cavity::{cavity_decompose, cavity_decompose_with, decomposed_energy, CavityDecomposition, SiteTerm};
pub use config::{model_spec_to_string, parse_model_spec, KeyValues};
pub use disorder::{sample_disorder, Disorder};
pub use energy::{energy, gardner_fields};
pub use potential::{Potential, PotentialU};
pub use spec::{st_kappa0, GardnerSize, ModelKind, ModelSpec, SpinConfiguration, SpinDomain};
