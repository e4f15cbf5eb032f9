use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutPopulation {
    /// Population of ms = 0, in [0, 1].
    pub population: f64,
    /// True when the raw estimate fell outside [0, 1].
    pub clamped: bool,
}

/// Population of ms = 0 from mean counts per shot `c` given the bright
/// (`c_m`) and dark (`c_b`) calibration levels.
pub fn resonant_readout_population(c: f64, c_m: f64, c_b: f64) -> Result<ReadoutPopulation> {
    check_finite("C", c)?;
    check_finite("c_M", c_m)?;
    check_finite("c_B", c_b)?;
    if c_m <= c_b {
        return Err(Error::InvalidCalibration(format!("c_M = {c_m} must exceed c_B = {c_b}")));
    }
    let raw = (c - c_b) / (c_m - c_b);
    let population = raw.clamp(0.0, 1.0);
    Ok(ReadoutPopulation { population, clamped: population != raw })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_points() {
        let top = resonant_readout_population(0.11, 0.11, 0.0057).unwrap();
        assert_eq!(top.population, 1.0);
        assert!(!top.clamped);
        assert_eq!(resonant_readout_population(0.0057, 0.11, 0.0057).unwrap().population, 0.0);
        let mid = resonant_readout_population(0.05785, 0.11, 0.0057).unwrap();
        assert!((mid.population - 0.5).abs() < 1e-12);
    }

    #[test]
    fn clamps_and_flags() {
        let r = resonant_readout_population(0.2, 0.11, 0.0057).unwrap();
        assert_eq!(r.population, 1.0);
        assert!(r.clamped);
        let r = resonant_readout_population(0.0, 0.11, 0.0057).unwrap();
        assert_eq!(r.population, 0.0);
        assert!(r.clamped);
    }

    #[test]
    fn bad_calibration() {
        assert!(matches!(resonant_readout_population(0.1, 0.01, 0.01), Err(Error::InvalidCalibration(_))));
    }
}
