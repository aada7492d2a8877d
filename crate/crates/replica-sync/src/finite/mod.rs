//! Finite-N synchronization instances: generation, posterior sampling,
//! exact enumeration and diagnostics against replica predictions.

mod exact;
mod gibbs;
mod instance;
mod measure;

pub use exact::{exact_free_energy, exact_free_energy_with, ExactOptions, ExactReport, EXACT_BUDGET};
pub use gibbs::{gibbs_sweep, GibbsChain};
pub use instance::{generate_sync, pair_index, SyncInstance};
pub use measure::{measure, model_constants, orbit_distance, DiagnosticsReport, ModelConstants};
