use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, Drive, EvolveOptions, Generator, Level, NVModel, N_LEVELS};
use crate::error::{check_nonnegative, check_positive, Error, Result};
use crate::rng;
use crate::spectrum::{csv_number, poisson};

/// Timing resolution of the photon counting electronics (ns).
pub const TCSPC_FLOOR_NS: f64 = 0.195;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiConfig {
    pub window: f64,
    pub bin: f64,
    pub bin_floor: f64,
    /// Gaussian detection jitter (ns, standard deviation).
    pub jitter_std: f64,
    pub n_shots: f64,
    pub collection_eff: f64,
    pub initial: Level,
}

impl Default for RabiConfig {
    fn default() -> Self {
        Self {
            window: 150.0,
            bin: 0.2,
            bin_floor: TCSPC_FLOOR_NS,
            jitter_std: 0.0,
            n_shots: 1e6,
            collection_eff: 0.01,
            initial: Level::G0,
        }
    }
}

impl RabiConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("window", self.window)?;
        check_positive("bin", self.bin)?;
        check_nonnegative("bin_floor", self.bin_floor)?;
        check_nonnegative("jitter_std", self.jitter_std)?;
        check_nonnegative("n_shots", self.n_shots)?;
        if !(0.0..=1.0).contains(&self.collection_eff) {
            return Err(Error::InvalidParameter {
                name: "collection_eff",
                reason: format!("must be in [0, 1], got {}", self.collection_eff),
            });
        }
        if self.bin < self.bin_floor {
            return Err(Error::InvalidBinning(format!(
                "bin {} ns is below the timing floor {} ns",
                self.bin, self.bin_floor
            )));
        }
        if self.bin > self.window {
            return Err(Error::InvalidBinning(format!("bin {} ns exceeds window {} ns", self.bin, self.window)));
        }
        Ok(())
    }
}

/// Photon arrival-time histogram over `[0, window)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiHistogram {
    pub bin: f64,
    pub centers: Vec<f64>,
    pub expected: Vec<f64>,
    pub sampled: Vec<u64>,
}

impl RabiHistogram {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_ns,expected,sampled\n");
        for i in 0..self.centers.len() {
            let _ = writeln!(s, "{},{},{}", csv_number(self.centers[i]), csv_number(self.expected[i]), self.sampled[i]);
        }
        s
    }
}

const SUB: usize = 8;

/// Arrival-time histogram of fluorescence under `pulse`, starting from
/// `config.initial`. Expected counts are the excited-population trace,
/// convolved with the detection jitter and integrated over each bin.
pub fn simulate_rabi(model: &NVModel, pulse: &Drive, config: &RabiConfig, seed: u64) -> Result<RabiHistogram> {
    config.validate()?;
    pulse.validate()?;
    let n_bins = (config.window / config.bin).floor() as usize;
    let dt = config.bin / SUB as f64;
    let half = (5.0 * config.jitter_std / dt).ceil() as usize;
    let n_fine = n_bins * SUB + 1 + half;
    let times: Vec<f64> = (0..n_fine).map(|k| k as f64 * dt).collect();
    let mut support = [false; N_LEVELS];
    support[config.initial.index()] = true;
    let g = Generator::reduced(model, std::slice::from_ref(pulse), 0.0, &support)?;
    let i0 = g.kept().iter().position(|&k| k == config.initial.index()).expect("initial level kept");
    let mut rho0 = DMatrix::<C64>::zeros(g.dim(), g.dim());
    rho0[(i0, i0)] = C64::new(1.0, 0.0);
    let excited: Vec<usize> = (0..g.dim()).filter(|&i| Level::ALL[g.kept()[i]].is_excited()).collect();
    let pop: Vec<f64> = if excited.is_empty() {
        vec![0.0; n_fine]
    } else {
        let (states, _, _) = integrate(&g, &rho0, 0.0, &times, EvolveOptions::default())?;
        states.iter().map(|r| excited.iter().map(|&i| r[(i, i)].re).sum()).collect()
    };
    let rate: Vec<f64> = if half == 0 {
        pop
    } else {
        let w: Vec<f64> = (0..=2 * half)
            .map(|j| {
                let u = (j as f64 - half as f64) * dt / config.jitter_std;
                (-0.5 * u * u).exp()
            })
            .collect();
        let norm: f64 = w.iter().sum();
        (0..n_fine)
            .map(|i| {
                (0..=2 * half)
                    .filter_map(|j| (i + half).checked_sub(j).filter(|&k| k < n_fine).map(|k| w[j] * pop[k]))
                    .sum::<f64>()
                    / norm
            })
            .collect()
    };
    let scale = config.n_shots * config.collection_eff / model.excited_lifetime;
    let expected: Vec<f64> = (0..n_bins)
        .map(|b| {
            let f = &rate[b * SUB..=(b + 1) * SUB];
            let simpson: f64 = f[0] + f[SUB] + (1..SUB).map(|k| if k % 2 == 1 { 4.0 } else { 2.0 } * f[k]).sum::<f64>();
            (scale * simpson * dt / 3.0).max(0.0)
        })
        .collect();
    let mut r = rng::stream(seed, 0);
    let sampled = expected.iter().map(|&e| poisson(e, &mut r)).collect();
    let centers = (0..n_bins).map(|b| (b as f64 + 0.5) * config.bin).collect();
    Ok(RabiHistogram { bin: config.bin, centers, expected, sampled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Envelope;

    fn pulse(rabi: f64) -> Drive {
        Drive::optical(Level::G0, Level::Ey, rabi, 0.0).with_envelope(Envelope::pulse(50.0, 90.0))
    }

    #[test]
    fn zero_drive_is_flat_zero() {
        let h = simulate_rabi(&NVModel::default(), &pulse(0.0), &RabiConfig::default(), 1).unwrap();
        assert!(h.expected.iter().all(|&e| e == 0.0));
        assert!(h.sampled.iter().all(|&c| c == 0));
    }

    #[test]
    fn binning_errors() {
        let m = NVModel::default();
        let wide = RabiConfig { bin: 200.0, ..Default::default() };
        assert!(matches!(simulate_rabi(&m, &pulse(50.0), &wide, 1), Err(Error::InvalidBinning(_))));
        let fine = RabiConfig { bin: 0.1, ..Default::default() };
        assert!(matches!(simulate_rabi(&m, &pulse(50.0), &fine, 1), Err(Error::InvalidBinning(_))));
    }

    #[test]
    fn jitter_preserves_total_counts() {
        let m = NVModel::default();
        let base = RabiConfig { window: 120.0, bin: 0.5, ..Default::default() };
        let a = simulate_rabi(&m, &pulse(50.0), &base, 1).unwrap();
        let b = simulate_rabi(&m, &pulse(50.0), &RabiConfig { jitter_std: 0.5, ..base }, 1).unwrap();
        let (sa, sb): (f64, f64) = (a.expected.iter().sum(), b.expected.iter().sum());
        assert!((sa - sb).abs() < 1e-3 * sa, "{sa} {sb}");
    }
}
