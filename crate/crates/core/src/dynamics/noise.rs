use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_nonnegative, check_positive, Result};
use crate::rng;

/// Excited-state shift per unit of local electric field, MHz per (MV/m).
pub const DEFAULT_DIPOLE_SHIFT: f64 = 4000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Continuous Gaussian process with exponential autocorrelation.
    OrnsteinUhlenbeck,
    /// Piecewise-constant; a fresh Gaussian value after every repump event.
    RepumpJump,
}

/// Spectral-diffusion process acting as a common shift of the excited levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProcess {
    pub kind: NoiseKind,
    /// Stationary standard deviation of the optical detuning (MHz).
    pub stationary_std: f64,
    /// OU correlation time, or the interval between repump events (ns).
    pub correlation_time: f64,
    pub dipole_shift_coeff: f64,
}

impl NoiseProcess {
    pub fn new(kind: NoiseKind, stationary_std: f64, correlation_time: f64) -> Self {
        Self { kind, stationary_std, correlation_time, dipole_shift_coeff: DEFAULT_DIPOLE_SHIFT }
    }

    pub fn none() -> Self {
        Self::new(NoiseKind::RepumpJump, 0.0, 1.0)
    }

    /// Process with the detuning spread produced by a field spread (MV/m).
    pub fn from_field_std(kind: NoiseKind, field_std: f64, correlation_time: f64, dipole_shift_coeff: f64) -> Self {
        Self { kind, stationary_std: field_std * dipole_shift_coeff, correlation_time, dipole_shift_coeff }
    }

    pub fn validate(&self) -> Result<()> {
        check_nonnegative("stationary_std", self.stationary_std)?;
        check_positive("correlation_time", self.correlation_time)?;
        check_nonnegative("dipole_shift_coeff", self.dipole_shift_coeff)
    }

    /// Draw from the stationary distribution.
    pub fn stationary_draw(&self, rng: &mut impl Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.stationary_std * z
    }

    /// Exact OU transition from `x` over `dt` ns.
    pub fn ou_step(&self, x: f64, dt: f64, rng: &mut impl Rng) -> f64 {
        let a = (-dt / self.correlation_time).exp();
        let s = self.stationary_std * (1.0 - a * a).sqrt();
        let z: f64 = StandardNormal.sample(rng);
        a * x + s * z
    }
}

/// Detuning trace (MHz) on the grid `0, dt, 2 dt, ...` below `duration`.
pub fn sample_noise(process: &NoiseProcess, seed: u64, duration: f64, dt: f64) -> Result<Vec<f64>> {
    process.validate()?;
    check_positive("dt", dt)?;
    check_nonnegative("duration", duration)?;
    let n = (duration / dt).ceil() as usize;
    let mut out = Vec::with_capacity(n);
    if process.stationary_std == 0.0 {
        out.resize(n, 0.0);
        return Ok(out);
    }
    let mut rng = rng::stream(seed, 0);
    match process.kind {
        NoiseKind::OrnsteinUhlenbeck => {
            let mut x = process.stationary_draw(&mut rng);
            for _ in 0..n {
                out.push(x);
                x = process.ou_step(x, dt, &mut rng);
            }
        }
        NoiseKind::RepumpJump => {
            let normal = Normal::new(0.0, process.stationary_std).expect("validated std");
            let mut epoch = usize::MAX;
            let mut x = 0.0;
            for k in 0..n {
                let e = (k as f64 * dt / process.correlation_time).floor() as usize;
                if e != epoch {
                    epoch = e;
                    x = normal.sample(&mut rng);
                }
                out.push(x);
            }
        }
    }
    Ok(out)
}
