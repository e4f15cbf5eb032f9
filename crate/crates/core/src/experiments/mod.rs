//! Protocol-level simulators: PLE scans, optical Rabi histograms, resonant
//! readout, CPT spectra, 14N cooling, 13C bath preparation and spin-photon
//! entanglement statistics.

mod bath;
mod cooling;
mod cpt;
mod entanglement;
mod ple;
mod rabi;
mod readout;

pub use bath::{simulate_bath_preparation, BathConfig, BathResult};
pub use cooling::{simulate_nuclear_cooling, CoolingConfig, CoolingTrace};
pub use cpt::{broadened_dip, cpt_linewidth, simulate_cpt, two_photon_detuning, CPTConfig, CptMode, LambdaState};
pub use entanglement::{
    bin_attenuation, entangled_conditional_probability, fidelity_lower_bound, fit_conditional_curve, records_to_csv,
    simulate_entanglement_run, ConditionalCurves, Correlations, DetectionRecord, EntanglementConfig, EntanglementRun,
    PhotonBasis, Polarization,
};
pub use ple::{simulate_ple, PLEProtocol, PleMode};
pub use rabi::{simulate_rabi, RabiConfig, RabiHistogram, TCSPC_FLOOR_NS};
pub use readout::{resonant_readout_population, ReadoutPopulation};
