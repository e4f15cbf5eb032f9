//! Estimators: histogramming, Lorentzian line fits, exponential and
//! oscillation fits, spectral peaks and scan-to-scan statistics.

mod histogram;
mod lm;
mod lorentz;
mod oscillation;
mod scan;
mod spectral;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use histogram::{bin_count, histogram, Histogram};
pub use lm::{levenberg_marquardt, LmConfig, LmOutcome};
pub use lorentz::{fit_exponential, fit_lorentzian, lorentzian, PeakGuess};
pub use oscillation::{fit_oscillation, OscillationFit};
pub use scan::{scan_statistics, ScanStatistics};
pub use spectral::dominant_frequency;

/// Outcome of a nonlinear fit. Key names are stable across releases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: BTreeMap<String, f64>,
    /// One-sigma uncertainties, same keys as `params`.
    pub uncertainties: BTreeMap<String, f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub n_iter: usize,
}

impl FitResult {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    pub fn uncertainty(&self, key: &str) -> Option<f64> {
        self.uncertainties.get(key).copied()
    }

    /// Parameter `name` of peak `k` (`center`, `fwhm` or `amplitude`).
    pub fn peak(&self, name: &str, k: usize) -> Option<f64> {
        self.get(&format!("{name}_{k}")).or_else(|| if k == 0 { self.get(name) } else { None })
    }

    pub fn n_peaks(&self) -> usize {
        if self.params.contains_key("center") {
            1
        } else {
            self.params.keys().filter(|k| k.starts_with("center_")).count()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit result serializes")
    }
}
