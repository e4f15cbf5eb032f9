//! Ten-level Lindblad model of the NV center under optical and microwave
//! drives. Frequencies are linear MHz, times ns; 2π enters only when the
//! generator is assembled.

mod drive;
mod evolve;
mod liouvillian;
mod model;
mod noise;
mod state;
mod steady;

pub use drive::{Drive, DriveKind, DriveTarget, Envelope, FrequencyReference, DEFAULT_RISE_NS};
pub use evolve::{evolve, evolve_expm, integrate, propagate_expm, propagate_with_integral, EvolveOptions, Trajectory};
pub use liouvillian::{liouvillian, unvectorize, vectorize, Generator, Superoperator, RAD_PER_NS_PER_MHZ};
pub use model::{build_nv_model, lifetime_from_linewidth, BranchingRow, Level, ModelRates, NVModel, N_LEVELS};
pub use noise::{sample_noise, NoiseKind, NoiseProcess, DEFAULT_DIPOLE_SHIFT};
pub use state::{trace_distance, DensityMatrix, HERMITIAN_TOL, POSITIVITY_TOL, TRACE_TOL};
pub use steady::{nullity, steady_state, steady_state_of, NULLITY_RTOL};

use crate::error::{Error, Result};

/// Detected photon rate (counts/s) from the excited-state population.
pub fn fluorescence_rate(rho: &DensityMatrix, model: &NVModel, collection_eff: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&collection_eff) {
        return Err(Error::InvalidParameter {
            name: "collection_eff",
            reason: format!("must be in [0, 1], got {collection_eff}"),
        });
    }
    Ok(collection_eff * rho.excited_population() / model.excited_lifetime * 1e9)
}
