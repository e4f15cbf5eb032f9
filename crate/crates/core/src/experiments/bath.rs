use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::NVModel;
use crate::error::{check_nonnegative, check_positive, Error, Result};
use crate::rng;
use crate::spectrum::{poisson, AxisUnit, Spectrum};

use super::cpt::{broadened_dip, two_photon_detuning, CPTConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathConfig {
    /// Dark-resonance width, contrast and 14N hyperfine constant; `b_scan` is ignored.
    pub cpt: CPTConfig,
    pub n_carbon: usize,
    /// Standard deviation of the 13C hyperfine couplings (MHz).
    pub coupling_std: f64,
    /// Correlation time of the Overhauser shift (ns).
    pub t1_nuc: f64,
    /// Time from the end of conditioning to the readout (ns).
    pub delay: f64,
    /// Field during preparation (G).
    pub b_prep: f64,
    /// Readout fields (G); run `k` reads out at `b_ro[k % len]`.
    pub b_ro: Vec<f64>,
    /// Conditioning window (ns).
    pub t_cond: f64,
    /// Runs are kept when the conditioning window records at most this many counts.
    pub n_cond: u64,
    /// Count rate away from dark resonance during conditioning (per ns).
    pub bright_rate: f64,
    /// Mean readout counts away from dark resonance.
    pub readout_counts: f64,
    pub n_runs: usize,
}

impl Default for BathConfig {
    fn default() -> Self {
        Self {
            cpt: CPTConfig { r_a: 0.2, ..CPTConfig::default() },
            n_carbon: 40,
            coupling_std: 0.15,
            t1_nuc: 1e7,
            delay: 1e4,
            b_prep: 0.0,
            b_ro: (0..=60).map(|k| -0.6 + 0.02 * k as f64).collect(),
            t_cond: 8e4,
            n_cond: 0,
            bright_rate: 6.25e-5,
            readout_counts: 5.0,
            n_runs: 10_000,
        }
    }
}

impl BathConfig {
    pub fn validate(&self) -> Result<()> {
        self.cpt.validate_rates()?;
        check_nonnegative("coupling_std", self.coupling_std)?;
        check_positive("t1_nuc", self.t1_nuc)?;
        check_nonnegative("delay", self.delay)?;
        check_nonnegative("t_cond", self.t_cond)?;
        check_nonnegative("bright_rate", self.bright_rate)?;
        check_nonnegative("readout_counts", self.readout_counts)?;
        if self.t_cond == 0.0 {
            return Err(Error::InvalidProtocol("t_cond must be > 0 for threshold conditioning".into()));
        }
        if self.b_ro.is_empty() {
            return Err(Error::InvalidProtocol("b_ro is empty".into()));
        }
        if self.b_ro.iter().any(|b| !b.is_finite()) || !self.b_prep.is_finite() {
            return Err(Error::InvalidProtocol("fields must be finite".into()));
        }
        if self.n_runs == 0 {
            return Err(Error::InvalidProtocol("n_runs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathResult {
    pub unconditioned: Spectrum,
    pub conditioned: Spectrum,
    /// Standard deviation of the readout-time two-photon detuning shift (MHz), all runs.
    pub unconditioned_width: f64,
    /// The same over the kept runs.
    pub conditioned_width: f64,
    /// The same with each run weighted by its probability of being kept.
    pub expected_conditioned_width: f64,
    pub n_kept: usize,
}

fn poisson_cdf(k: u64, mean: f64) -> f64 {
    let mut term = (-mean).exp();
    let mut acc = term;
    for j in 1..=k {
        term *= mean / j as f64;
        acc += term;
    }
    acc.min(1.0)
}

fn weighted_std(values: &[f64], weights: &[f64]) -> f64 {
    let w: f64 = weights.iter().sum();
    if w <= 0.0 {
        return f64::NAN;
    }
    let m = values.iter().zip(weights).map(|(v, p)| v * p).sum::<f64>() / w;
    (values.iter().zip(weights).map(|(v, p)| p * (v - m).powi(2)).sum::<f64>() / w).sqrt()
}

/// Preparation of the 13C bath by post-selection. Each run draws a bath
/// configuration, records conditioning counts at `b_prep`, lets the Overhauser
/// shift relax as an Ornstein-Uhlenbeck process for `delay`, and reads out at
/// one field of `b_ro`.
pub fn simulate_bath_preparation(cfg: &BathConfig, model: &NVModel, seed: u64) -> Result<BathResult> {
    cfg.validate()?;
    let fwhm = cfg.cpt.linewidth()?;
    let zeeman = model.ground_params.zeeman_per_gauss;
    let contrast = cfg.cpt.contrast;
    let mut r = rng::stream(seed, 0);
    let couplings: Vec<f64> = if cfg.coupling_std > 0.0 {
        let d = Normal::new(0.0, cfg.coupling_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        (0..cfg.n_carbon).map(|_| d.sample(&mut r)).collect()
    } else {
        vec![0.0; cfg.n_carbon]
    };
    let sigma = 0.5 * couplings.iter().map(|a| a * a).sum::<f64>().sqrt();
    let a = (-cfg.delay / cfg.t1_nuc).exp();
    let n_b = cfg.b_ro.len();
    let mut shifts = Vec::with_capacity(cfg.n_runs);
    let mut keep_prob = Vec::with_capacity(cfg.n_runs);
    let mut kept = Vec::with_capacity(cfg.n_runs);
    let mut all_rows = (vec![0.0; n_b], vec![0u64; n_b]);
    let mut cond_rows = (vec![0.0; n_b], vec![0u64; n_b]);
    for run in 0..cfg.n_runs {
        let z: f64 = couplings.iter().map(|&c| if r.random::<bool>() { 0.5 * c } else { -0.5 * c }).sum();
        let d_prep = two_photon_detuning(zeeman, cfg.b_prep, cfg.cpt.hyperfine_gs, 0, z);
        let mean_cond = cfg.bright_rate * cfg.t_cond * (1.0 - contrast * broadened_dip(d_prep, fwhm, 0.0));
        let n = poisson(mean_cond, &mut r);
        let noise: f64 = StandardNormal.sample(&mut r);
        let z_ro = a * z + sigma * (1.0 - a * a).sqrt() * noise;
        let i = run % n_b;
        let d_ro = two_photon_detuning(zeeman, cfg.b_ro[i], cfg.cpt.hyperfine_gs, 0, z_ro);
        let e = cfg.readout_counts * (1.0 - contrast * broadened_dip(d_ro, fwhm, 0.0));
        let c = poisson(e, &mut r);
        all_rows.0[i] += e;
        all_rows.1[i] += c;
        let keep = n <= cfg.n_cond;
        if keep {
            cond_rows.0[i] += e;
            cond_rows.1[i] += c;
        }
        shifts.push(2.0 * z_ro);
        keep_prob.push(poisson_cdf(cfg.n_cond, mean_cond));
        kept.push(if keep { 1.0 } else { 0.0 });
    }
    let ones = vec![1.0; shifts.len()];
    let n_kept = kept.iter().filter(|&&k| k > 0.0).count();
    Ok(BathResult {
        unconditioned: Spectrum::from_scans(AxisUnit::Gauss, cfg.b_ro.clone(), vec![all_rows]),
        conditioned: Spectrum::from_scans(AxisUnit::Gauss, cfg.b_ro.clone(), vec![cond_rows]),
        unconditioned_width: weighted_std(&shifts, &ones),
        conditioned_width: weighted_std(&shifts, &kept),
        expected_conditioned_width: weighted_std(&shifts, &keep_prob),
        n_kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_cdf_values() {
        assert!((poisson_cdf(0, 2.0) - (-2.0f64).exp()).abs() < 1e-15);
        assert!((poisson_cdf(1, 2.0) - 3.0 * (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn zero_conditioning_window_rejected() {
        let cfg = BathConfig { t_cond: 0.0, ..Default::default() };
        let err = simulate_bath_preparation(&cfg, &NVModel::default(), 1).unwrap_err();
        assert!(matches!(err, Error::InvalidProtocol(_)));
    }

    #[test]
    fn no_carbon_means_no_spread() {
        let cfg = BathConfig { n_carbon: 0, n_runs: 500, ..Default::default() };
        let res = simulate_bath_preparation(&cfg, &NVModel::default(), 2).unwrap();
        assert_eq!(res.unconditioned_width, 0.0);
        assert_eq!(res.conditioned_width, 0.0);
    }
}
