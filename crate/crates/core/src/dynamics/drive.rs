use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_nonnegative, Error, Result};

use super::model::Level;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveKind {
    Optical,
    Microwave,
}

/// Which levels a drive couples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DriveTarget {
    /// Optical: ground level to the excited eigenstate dominated by `upper`.
    /// Microwave: g0 to g+1 or g-1.
    Pair { lower: Level, upper: Level },
    /// Optical field of polarization (sigma+, sigma-) acting on ground level
    /// `ground`; couples to every excited basis state through its dipole.
    /// The laser frequency is referenced to the eigen-transition of `reference`.
    Polarization { ground: Level, sigma_plus: C64, sigma_minus: C64, reference: Level },
}

/// Origin against which `Drive::detuning` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyReference {
    /// The target transition of the model as configured.
    #[default]
    Dressed,
    /// The target transition with the ground-state Zeeman shift removed.
    ZeroField,
}

/// Time dependence of a drive amplitude, a factor in [0, 1] (times in ns).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub enum Envelope {
    #[default]
    Constant,
    /// On between `start` and `stop` with linear edges of width `rise`
    /// centered on both times, so the pulse area equals `stop - start`.
    Pulse { start: f64, stop: f64, rise: f64 },
    /// `values[k]` on `[times[k], times[k + 1])`, zero outside.
    PiecewiseConstant { times: Vec<f64>, values: Vec<f64> },
}

pub const DEFAULT_RISE_NS: f64 = 1.0;

impl Envelope {
    pub fn pulse(start: f64, stop: f64) -> Self {
        Self::Pulse { start, stop, rise: DEFAULT_RISE_NS }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant => Ok(()),
            Self::Pulse { start, stop, rise } => {
                check_finite("start", *start)?;
                check_finite("stop", *stop)?;
                check_nonnegative("rise", *rise)?;
                if stop < start {
                    return Err(Error::InvalidDrive(format!("pulse stop {stop} precedes start {start}")));
                }
                Ok(())
            }
            Self::PiecewiseConstant { times, values } => {
                if times.len() != values.len() + 1 {
                    return Err(Error::InvalidDrive("piecewise envelope needs one more edge than values".into()));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
                    return Err(Error::InvalidDrive("piecewise envelope edges must increase".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidDrive("piecewise envelope values must be finite".into()));
                }
                Ok(())
            }
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Self::Constant => 1.0,
            Self::Pulse { start, stop, rise } => {
                let (start, stop, rise) = (*start, *stop, *rise);
                if rise <= 0.0 {
                    return if t >= start && t < stop { 1.0 } else { 0.0 };
                }
                let half = rise / 2.0;
                let up = ((t - (start - half)) / rise).clamp(0.0, 1.0);
                let down = (((stop + half) - t) / rise).clamp(0.0, 1.0);
                up.min(down)
            }
            Self::PiecewiseConstant { times, values } => {
                if times.is_empty() || t < times[0] || t >= times[times.len() - 1] {
                    return 0.0;
                }
                let k = times.partition_point(|&e| e <= t) - 1;
                values[k]
            }
        }
    }

    /// Times where the envelope or its derivative is discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Constant => Vec::new(),
            Self::Pulse { start, stop, rise } => {
                let half = rise / 2.0;
                let mut v = vec![start - half, start + half, stop - half, stop + half];
                v.dedup();
                v
            }
            Self::PiecewiseConstant { times, .. } => times.clone(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Constant)
    }
}

/// A coherent drive in the rotating-wave approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drive {
    pub kind: DriveKind,
    pub target: DriveTarget,
    /// Rabi frequency (MHz): a resonant two-level system completes one
    /// population cycle in 1/rabi_frequency microseconds.
    pub rabi_frequency: f64,
    /// Laser minus transition frequency (MHz).
    pub detuning: f64,
    /// Phase of the coupling (rad).
    pub phase: f64,
    pub reference: FrequencyReference,
    pub envelope: Envelope,
}

impl Drive {
    pub fn optical(lower: Level, upper: Level, rabi_frequency: f64, detuning: f64) -> Self {
        Self {
            kind: DriveKind::Optical,
            target: DriveTarget::Pair { lower, upper },
            rabi_frequency,
            detuning,
            phase: 0.0,
            reference: FrequencyReference::Dressed,
            envelope: Envelope::Constant,
        }
    }

    pub fn microwave(upper: Level, rabi_frequency: f64, detuning: f64) -> Self {
        Self {
            kind: DriveKind::Microwave,
            target: DriveTarget::Pair { lower: Level::G0, upper },
            ..Self::optical(Level::G0, upper, rabi_frequency, detuning)
        }
    }

    pub fn with_envelope(mut self, envelope: Envelope) -> Self {
        self.envelope = envelope;
        self
    }

    pub fn with_reference(mut self, reference: FrequencyReference) -> Self {
        self.reference = reference;
        self
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_nonnegative("rabi_frequency", self.rabi_frequency)?;
        check_finite("detuning", self.detuning)?;
        check_finite("phase", self.phase)?;
        self.envelope.validate()?;
        match (self.kind, self.target) {
            (DriveKind::Optical, DriveTarget::Pair { lower, upper }) => {
                if !lower.is_ground() || !upper.is_excited() {
                    return Err(Error::InvalidDrive(format!(
                        "optical drive must couple a ground level to an excited level, got {lower} -> {upper}"
                    )));
                }
            }
            (DriveKind::Microwave, DriveTarget::Pair { lower, upper }) => {
                if lower != Level::G0 || !(upper == Level::GPlus || upper == Level::GMinus) {
                    return Err(Error::InvalidDrive(format!(
                        "microwave drive must couple g0 to g+1 or g-1, got {lower} -> {upper}"
                    )));
                }
            }
            (DriveKind::Optical, DriveTarget::Polarization { ground, sigma_plus, sigma_minus, reference }) => {
                if !ground.is_ground() || !reference.is_excited() {
                    return Err(Error::InvalidDrive(
                        "polarization drive needs a ground level and an excited reference".into(),
                    ));
                }
                let norm = sigma_plus.norm_sqr() + sigma_minus.norm_sqr();
                if !(norm > 0.0) || !norm.is_finite() {
                    return Err(Error::InvalidDrive("polarization vector must be nonzero".into()));
                }
            }
            (DriveKind::Microwave, DriveTarget::Polarization { .. }) => {
                return Err(Error::InvalidDrive("microwave drives take a level pair".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pulse_has_centered_edges() {
        let e = Envelope::pulse(50.0, 90.0);
        assert_eq!(e.value(49.0), 0.0);
        assert!((e.value(50.0) - 0.5).abs() < 1e-12);
        assert_eq!(e.value(70.0), 1.0);
        assert!((e.value(90.25) - 0.25).abs() < 1e-12);
        assert_eq!(e.value(91.0), 0.0);
        assert_eq!(e.breakpoints(), vec![49.5, 50.5, 89.5, 90.5]);
    }

    #[test]
    fn piecewise_is_left_closed() {
        let e = Envelope::PiecewiseConstant { times: vec![0.0, 1.0, 2.0], values: vec![0.3, 0.7] };
        e.validate().unwrap();
        assert_eq!(e.value(-0.1), 0.0);
        assert_eq!(e.value(0.0), 0.3);
        assert_eq!(e.value(1.0), 0.7);
        assert_eq!(e.value(2.0), 0.0);
    }

    #[test]
    fn invalid_drives_rejected() {
        assert!(Drive::optical(Level::Ey, Level::G0, 1.0, 0.0).validate().is_err());
        assert!(Drive::microwave(Level::Ey, 1.0, 0.0).validate().is_err());
        assert!(Drive::optical(Level::G0, Level::Ey, -1.0, 0.0).validate().is_err());
        let bad = Envelope::Pulse { start: 5.0, stop: 1.0, rise: 1.0 };
        assert!(Drive::optical(Level::G0, Level::Ey, 1.0, 0.0).with_envelope(bad).validate().is_err());
        assert!(Drive::optical(Level::G0, Level::Ey, 1.0, 0.0).validate().is_ok());
    }
}
