use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::lorentzian;
use crate::dynamics::{steady_state_of, Drive, FrequencyReference, Generator, Level, NVModel};
use crate::error::{check_nonnegative, check_positive, Error, Result};
use crate::rng;
use crate::spectrum::{poisson, AxisUnit, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaState {
    A1,
    A2,
}

impl LambdaState {
    /// Branching parameter of the Lambda system through this state.
    pub fn default_eta(self) -> f64 {
        match self {
            Self::A1 => 3.1e-2,
            Self::A2 => 2.6,
        }
    }

    pub fn level(self) -> Level {
        match self {
            Self::A1 => Level::A1,
            Self::A2 => Level::A2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CptMode {
    /// Lorentzian dark resonances of width `cpt_linewidth`.
    #[default]
    ClosedForm,
    /// Steady-state fluorescence of the driven ten-level model.
    MasterEquation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CPTConfig {
    pub lambda_state: LambdaState,
    /// Excitation rate of the Lambda lasers (MHz).
    pub r_a: f64,
    /// Excitation rate of the recycling laser on g0 <-> Ey (MHz).
    pub r_e: f64,
    /// Defaults to the value for `lambda_state`.
    pub eta: Option<f64>,
    /// Excited-state decay rate (MHz).
    pub gamma: f64,
    /// Applied field axis (G).
    pub b_scan: Vec<f64>,
    /// 14N ground-state hyperfine constant (MHz).
    pub hyperfine_gs: f64,
    /// Excited- to ground-state hyperfine ratio.
    pub hyperfine_es_factor: f64,
    /// Standard deviation of the 13C Overhauser shift of each ms = +-1 level (MHz).
    pub carbon13_overhauser_std: f64,
    /// Fractional depth of a dark resonance.
    pub contrast: f64,
    /// Mean counts per scan point away from dark resonance.
    pub counts_per_point: f64,
    /// 14N populations for m_I = -1, 0, +1.
    pub n14_weights: [f64; 3],
    /// With one scan the 13C shift is averaged over; with several, each scan
    /// sees one static draw.
    pub n_scans: usize,
    pub mode: CptMode,
}

impl Default for CPTConfig {
    fn default() -> Self {
        Self {
            lambda_state: LambdaState::A2,
            r_a: 0.5,
            r_e: 1.0,
            eta: None,
            gamma: 13.0,
            b_scan: (0..=240).map(|k| -1.5 + 0.0125 * k as f64).collect(),
            hyperfine_gs: 2.2,
            hyperfine_es_factor: 20.0,
            carbon13_overhauser_std: 0.0,
            contrast: 0.95,
            counts_per_point: 20.0,
            n14_weights: [1.0 / 3.0; 3],
            n_scans: 1,
            mode: CptMode::ClosedForm,
        }
    }
}

impl CPTConfig {
    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or_else(|| self.lambda_state.default_eta())
    }

    /// Validation of everything except the field axis.
    pub fn validate_rates(&self) -> Result<()> {
        check_nonnegative("r_a", self.r_a)?;
        check_nonnegative("r_e", self.r_e)?;
        check_positive("eta", self.eta())?;
        check_positive("gamma", self.gamma)?;
        check_nonnegative("hyperfine_gs", self.hyperfine_gs)?;
        check_nonnegative("hyperfine_es_factor", self.hyperfine_es_factor)?;
        check_nonnegative("carbon13_overhauser_std", self.carbon13_overhauser_std)?;
        check_nonnegative("counts_per_point", self.counts_per_point)?;
        if !(0.0..=1.0).contains(&self.contrast) {
            return Err(Error::InvalidParameter {
                name: "contrast",
                reason: format!("must be in [0, 1], got {}", self.contrast),
            });
        }
        for &w in &self.n14_weights {
            check_nonnegative("n14_weights", w)?;
        }
        if self.n14_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidParameter { name: "n14_weights", reason: "must not all be zero".into() });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_rates()?;
        if self.b_scan.is_empty() {
            return Err(Error::InvalidProtocol("b_scan is empty".into()));
        }
        if self.b_scan.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidProtocol("b_scan has non-finite entries".into()));
        }
        if self.n_scans == 0 {
            return Err(Error::InvalidProtocol("n_scans must be >= 1".into()));
        }
        if self.mode == CptMode::MasterEquation && (self.r_a <= 0.0 || self.r_e <= 0.0) {
            return Err(Error::InvalidProtocol("master-equation mode needs r_a > 0 and r_e > 0".into()));
        }
        Ok(())
    }

    /// Dark-resonance FWHM in two-photon detuning (MHz).
    pub fn linewidth(&self) -> Result<f64> {
        cpt_linewidth(self.r_a, self.r_e, self.gamma, self.eta())
    }
}

/// Dark-resonance FWHM (MHz):
/// sqrt(R_A^2 / (1 + (R_A / R_E + 2 R_A / gamma) / eta)).
pub fn cpt_linewidth(r_a: f64, r_e: f64, gamma: f64, eta: f64) -> Result<f64> {
    for (name, v) in [("R_A", r_a), ("R_E", r_e), ("gamma", gamma), ("eta", eta)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} must be > 0 and finite, got {v}")));
        }
    }
    let bracket = 1.0 + (r_a / r_e + 2.0 * r_a / gamma) / eta;
    Ok((r_a * r_a / bracket).sqrt())
}

/// Two-photon detuning (MHz) between ms = +1 and ms = -1 for 14N projection
/// `m_i` and a common Overhauser shift `overhauser` of the ms = +-1 levels.
pub fn two_photon_detuning(zeeman_per_gauss: f64, b: f64, hyperfine: f64, m_i: i8, overhauser: f64) -> f64 {
    2.0 * (zeeman_per_gauss * b + hyperfine * m_i as f64 + overhauser)
}

/// Unit-depth Lorentzian of FWHM `fwhm` averaged over a zero-mean Gaussian
/// shift of standard deviation `sigma`.
pub fn broadened_dip(delta: f64, fwhm: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return lorentzian(delta, 0.0, fwhm);
    }
    let h = 0.25 * fwhm.min(sigma);
    let n = (8.0 * sigma / h).ceil() as i64;
    let mut acc = 0.0;
    let mut norm = 0.0;
    for k in -n..=n {
        let x = k as f64 * h;
        let w = (-0.5 * (x / sigma).powi(2)).exp();
        acc += w * lorentzian(delta - x, 0.0, fwhm);
        norm += w;
    }
    acc / norm
}

/// Relative fluorescence (1 away from resonance) versus field for the
/// closed-form line model, with a static extra shift `overhauser`.
fn closed_form_row(model: &NVModel, cfg: &CPTConfig, fwhm: f64, overhauser: f64, sigma: f64) -> Vec<f64> {
    let zeeman = model.ground_params.zeeman_per_gauss;
    let wsum: f64 = cfg.n14_weights.iter().sum();
    cfg.b_scan
        .iter()
        .map(|&b| {
            let dip: f64 = (-1i8..=1)
                .zip(cfg.n14_weights)
                .map(|(m, w)| {
                    let d = two_photon_detuning(zeeman, b, cfg.hyperfine_gs, m, overhauser);
                    w / wsum * broadened_dip(d, fwhm, 2.0 * sigma)
                })
                .sum();
            1.0 - cfg.contrast * dip
        })
        .collect()
}

fn lambda_drives(cfg: &CPTConfig) -> Vec<Drive> {
    let upper = cfg.lambda_state.level();
    let rabi_a = (cfg.r_a * cfg.gamma).sqrt();
    let rabi_e = (cfg.r_e * cfg.gamma).sqrt();
    vec![
        Drive::optical(Level::GPlus, upper, rabi_a, 0.0).with_reference(FrequencyReference::ZeroField),
        Drive::optical(Level::GMinus, upper, rabi_a, 0.0).with_reference(FrequencyReference::ZeroField),
        Drive::optical(Level::G0, Level::Ey, rabi_e, 0.0),
    ]
}

/// Excited population of the driven model at an effective field in which the
/// 14N and Overhauser shifts are folded into the Zeeman term.
fn master_equation_population(model: &NVModel, cfg: &CPTConfig, b_eff: f64) -> Result<f64> {
    let m = model.with_field(b_eff)?;
    let g = Generator::new(&m, &lambda_drives(cfg), 0.0)?;
    let rho = steady_state_of(&g, false)?;
    Ok((0..g.dim()).filter(|&i| Level::ALL[g.kept()[i]].is_excited()).map(|i| rho[(i, i)].re).sum())
}

fn master_equation_row(model: &NVModel, cfg: &CPTConfig, overhauser: f64, sigma: f64) -> Result<Vec<f64>> {
    let zeeman = model.ground_params.zeeman_per_gauss;
    let wsum: f64 = cfg.n14_weights.iter().sum();
    // Three-point Gauss-Hermite rule for the averaged 13C shift.
    let nodes: Vec<(f64, f64)> = if sigma > 0.0 {
        let s3 = 3f64.sqrt();
        vec![(-s3 * sigma, 1.0 / 6.0), (0.0, 2.0 / 3.0), (s3 * sigma, 1.0 / 6.0)]
    } else {
        vec![(0.0, 1.0)]
    };
    let pops = cfg
        .b_scan
        .par_iter()
        .map(|&b| {
            let mut acc = 0.0;
            for (m, w) in (-1i8..=1).zip(cfg.n14_weights) {
                if w == 0.0 {
                    continue;
                }
                for &(z, wz) in &nodes {
                    let b_eff = b + (cfg.hyperfine_gs * m as f64 + overhauser + z) / zeeman;
                    acc += w / wsum * wz * master_equation_population(model, cfg, b_eff)?;
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<f64>>>()?;
    let top = pops.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return Err(Error::NoSignal("no fluorescence anywhere on the scan".into()));
    }
    Ok(pops.iter().map(|p| p / top).collect())
}

/// CPT spectrum versus applied field (G). The three 14N Lambda resonances are
/// summed incoherently with `n14_weights`.
pub fn simulate_cpt(model: &NVModel, cfg: &CPTConfig, seed: u64) -> Result<Spectrum> {
    cfg.validate()?;
    let sigma = cfg.carbon13_overhauser_std;
    let fwhm = match cfg.mode {
        CptMode::ClosedForm => cfg.linewidth()?,
        CptMode::MasterEquation => 0.0,
    };
    let row = |shift: f64, spread: f64| -> Result<Vec<f64>> {
        match cfg.mode {
            CptMode::ClosedForm => Ok(closed_form_row(model, cfg, fwhm, shift, spread)),
            CptMode::MasterEquation => master_equation_row(model, cfg, shift, spread),
        }
    };
    let rows: Vec<(Vec<f64>, Vec<u64>)> = if cfg.n_scans == 1 {
        let mut r = rng::stream(seed, 0);
        let e: Vec<f64> = row(0.0, sigma)?.iter().map(|v| v * cfg.counts_per_point).collect();
        let s = e.iter().map(|&x| poisson(x, &mut r)).collect();
        vec![(e, s)]
    } else {
        (0..cfg.n_scans)
            .into_par_iter()
            .map(|k| {
                let mut r = rng::stream(seed, k as u64);
                let shift = sigma * rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut r);
                let e: Vec<f64> = row(shift, 0.0)?.iter().map(|v| v * cfg.counts_per_point).collect();
                let s = e.iter().map(|&x| poisson(x, &mut r)).collect();
                Ok((e, s))
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok(Spectrum::from_scans(AxisUnit::Gauss, cfg.b_scan.clone(), rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linewidth_limits() {
        let big = cpt_linewidth(2.0, 1.0, 13.0, 1e12).unwrap();
        assert!((big - 2.0).abs() < 1e-9);
        let a = cpt_linewidth(1.0, 1.0, 13.0, 1e-4).unwrap();
        let b = cpt_linewidth(1.0, 1.0, 13.0, 2e-4).unwrap();
        assert!((b / a / 2f64.sqrt() - 1.0).abs() < 0.01);
        assert!(matches!(cpt_linewidth(0.0, 1.0, 13.0, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn small_eta_asymptote() {
        let (ra, re, g, eta): (f64, f64, f64, f64) = (3.0, 1.0, 13.0, 1e-4);
        let approx = (ra * re * eta * g / (g + 2.0 * re)).sqrt();
        let exact = cpt_linewidth(ra, re, g, eta).unwrap();
        assert!((exact / approx - 1.0).abs() < 1e-3);
    }

    #[test]
    fn empty_scan_rejected() {
        let cfg = CPTConfig { b_scan: vec![], ..Default::default() };
        assert!(matches!(simulate_cpt(&NVModel::default(), &cfg, 1), Err(Error::InvalidProtocol(_))));
    }

    #[test]
    fn broadening_conserves_area() {
        let fwhm = 0.3;
        let h = 0.01;
        let area = |s: f64| (-20000..=20000).map(|k| broadened_dip(k as f64 * h, fwhm, s)).sum::<f64>() * h;
        let a0 = area(0.0);
        let a1 = area(1.0);
        assert!((a1 / a0 - 1.0).abs() < 0.02, "{a0} {a1}");
        assert!(broadened_dip(0.0, fwhm, 1.0) < 0.5);
    }

    #[test]
    fn dips_sit_at_compensating_fields() {
        let m = NVModel::default();
        let cfg = CPTConfig { r_a: 0.2, ..Default::default() };
        let s = simulate_cpt(&m, &cfg, 1).unwrap();
        let step = 2.0 * m.ground_params.zeeman_per_gauss;
        for mi in [-1.0, 0.0, 1.0] {
            let b0 = -mi * 2.0 * cfg.hyperfine_gs / step;
            let i = cfg.b_scan.iter().position(|&b| (b - b0).abs() < 0.007).unwrap();
            assert!(s.expected[i] < 0.8 * cfg.counts_per_point, "{mi}");
        }
    }
}
