//! Closed-form emitter photonics: objective collection efficiency, Purcell
//! enhancement, cooperativity and the resulting zero-phonon-line fraction.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_nonnegative, check_positive, Error, Result};

/// Natural linewidth of the uncoupled emitter (MHz).
pub const DEFAULT_GAMMA_RAD: f64 = 13.0;
pub const DEFAULT_XI: f64 = 0.03;
pub const DEFAULT_N_EFF: f64 = 1.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectionGeometry {
    pub na: f64,
    /// Index of the collection medium.
    pub n1: f64,
    /// Index of the medium hosting the emitter.
    pub n2: f64,
    /// Angle between the dipole and the optical axis (rad).
    pub phi_em: f64,
}

/// Fraction of a dipole's emission inside the acceptance cone of an objective.
pub fn collection_efficiency(g: &CollectionGeometry) -> Result<f64> {
    check_positive("na", g.na)?;
    check_positive("n1", g.n1)?;
    check_positive("n2", g.n2)?;
    check_finite("phi_em", g.phi_em)?;
    if !(0.0..=PI / 2.0).contains(&g.phi_em) {
        return Err(Error::InvalidGeometry(format!("phi_em {} outside [0, pi/2]", g.phi_em)));
    }
    let s = g.na * g.n1 / g.n2;
    if s > 1.0 {
        return Err(Error::InvalidGeometry(format!("na*n1/n2 = {s} exceeds 1")));
    }
    let c = s.asin().cos();
    let c3 = c * c * c;
    let cphi = g.phi_em.cos();
    Ok((4.0 - 3.0 * c - c3 + 3.0 * (c3 - c) * cphi * cphi) / 8.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub q: f64,
    /// Mode volume in units of (lambda0 / n)^3.
    pub mode_volume: f64,
    /// Free-space wavelength (nm).
    pub lambda0: f64,
    /// Effective index of the modes the uncoupled emitter decays into.
    pub n_eff: f64,
    /// |E_NV|^2 / |E_max|^2.
    pub field_overlap: f64,
    /// Dipole alignment |e . mu|^2 / |mu|^2.
    pub dipole_overlap: f64,
    /// Debye-Waller factor.
    pub xi: f64,
}

impl Default for CavityParams {
    fn default() -> Self {
        Self {
            q: 3000.0,
            mode_volume: 1.0,
            lambda0: 637.0,
            n_eff: DEFAULT_N_EFF,
            field_overlap: 1.0,
            dipole_overlap: 1.0,
            xi: DEFAULT_XI,
        }
    }
}

fn check_unit(name: &'static str, x: f64) -> Result<()> {
    check_nonnegative(name, x)?;
    if x > 1.0 {
        return Err(Error::InvalidParameter { name, reason: format!("must be <= 1, got {x}") });
    }
    Ok(())
}

fn check_xi(xi: f64) -> Result<()> {
    check_positive("xi", xi)?;
    if xi >= 1.0 {
        return Err(Error::InvalidParameter { name: "xi", reason: format!("must be < 1, got {xi}") });
    }
    Ok(())
}

impl CavityParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("q", self.q)?;
        check_positive("mode_volume", self.mode_volume)?;
        check_positive("lambda0", self.lambda0)?;
        check_positive("n_eff", self.n_eff)?;
        if !(1.0..=2.4).contains(&self.n_eff) {
            return Err(Error::InvalidParameter {
                name: "n_eff",
                reason: format!("must be in [1, 2.4], got {}", self.n_eff),
            });
        }
        check_unit("field_overlap", self.field_overlap)?;
        check_unit("dipole_overlap", self.dipole_overlap)?;
        check_xi(self.xi)
    }
}

/// Purcell factor of the cavity-coupled zero-phonon line relative to all
/// other decay channels. The mode volume is in (lambda0 / n)^3 units, so the
/// index and wavelength drop out.
pub fn purcell_from_cavity(c: &CavityParams) -> Result<f64> {
    c.validate()?;
    Ok(3.0 / (4.0 * PI * PI) * c.q / c.mode_volume * c.field_overlap * c.dipole_overlap * c.xi)
}

/// 2 g^2 / (kappa gamma), all rates in the same units.
pub fn cooperativity(g_coupling: f64, kappa: f64, gamma: f64) -> Result<f64> {
    check_finite("g_coupling", g_coupling)?;
    check_positive("kappa", kappa)?;
    check_positive("gamma", gamma)?;
    Ok(2.0 * g_coupling * g_coupling / (kappa * gamma))
}

/// Purcell factor from the coupled and uncoupled lifetimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimePurcell {
    pub value: f64,
    /// Set when the coupled lifetime exceeds the uncoupled one.
    pub negative: bool,
}

pub fn purcell_from_lifetimes(tau0: f64, tau: f64) -> Result<LifetimePurcell> {
    check_positive("tau0", tau0)?;
    check_positive("tau", tau)?;
    let value = tau0 / tau - 1.0;
    Ok(LifetimePurcell { value, negative: value < 0.0 })
}

/// Enhancement of the ZPL emission rate alone.
pub fn zpl_enhancement(p: f64, xi: f64) -> Result<f64> {
    check_nonnegative("purcell", p)?;
    check_xi(xi)?;
    Ok(p / xi)
}

/// Fraction of all emission in the ZPL once the cavity channel (rate P gamma,
/// ZPL only) is added to the bare emitter (ZPL fraction xi).
pub fn zpl_fraction_enhanced(p: f64, xi: f64) -> Result<f64> {
    check_nonnegative("purcell", p)?;
    check_xi(xi)?;
    Ok((p + xi) / (1.0 + p))
}

/// Quality factor for which the Purcell factor equals `gamma_ext / gamma_rad`.
pub fn required_q(linewidth_gamma_ext: f64, xi: f64, mode_volume: f64, overlaps: f64, gamma_rad: f64) -> Result<f64> {
    check_nonnegative("linewidth_gamma_ext", linewidth_gamma_ext)?;
    check_xi(xi)?;
    check_positive("mode_volume", mode_volume)?;
    check_positive("overlaps", overlaps)?;
    check_positive("gamma_rad", gamma_rad)?;
    let p = linewidth_gamma_ext / gamma_rad;
    Ok(p * 4.0 * PI * PI * mode_volume / (3.0 * overlaps * xi))
}
