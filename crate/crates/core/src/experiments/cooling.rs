use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::lorentzian;
use crate::dynamics::NVModel;
use crate::error::{check_nonnegative, check_positive, Error, Result};
use crate::rng;

use super::cpt::CPTConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingConfig {
    /// Rates, contrast and hyperfine constants; `b_scan` is ignored.
    pub cpt: CPTConfig,
    /// The 14N projection held at two-photon resonance.
    pub resonant_m_i: i8,
    pub n_cycles: usize,
    pub n_runs: usize,
    pub record_every: usize,
    /// Initial populations of m_I = -1, 0, +1.
    pub initial: [f64; 3],
    /// Detuning between the flip-flop partner states in the excited state (MHz).
    pub flip_flop_gap: f64,
}

impl Default for CoolingConfig {
    fn default() -> Self {
        Self {
            cpt: CPTConfig::default(),
            resonant_m_i: 0,
            n_cycles: 10_000,
            n_runs: 200,
            record_every: 100,
            initial: [1.0 / 3.0; 3],
            flip_flop_gap: 500.0,
        }
    }
}

impl CoolingConfig {
    pub fn validate(&self) -> Result<()> {
        self.cpt.validate_rates()?;
        if !(-1..=1).contains(&self.resonant_m_i) {
            return Err(Error::InvalidParameter {
                name: "resonant_m_i",
                reason: format!("must be -1, 0 or 1, got {}", self.resonant_m_i),
            });
        }
        if self.n_runs == 0 || self.record_every == 0 {
            return Err(Error::InvalidProtocol("n_runs and record_every must be >= 1".into()));
        }
        check_positive("flip_flop_gap", self.flip_flop_gap)?;
        for &p in &self.initial {
            check_nonnegative("initial", p)?;
        }
        if self.initial.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidParameter { name: "initial", reason: "must not all be zero".into() });
        }
        Ok(())
    }

    /// Probability that one optical excitation flips the 14N spin.
    pub fn flip_flop_probability(&self) -> f64 {
        (self.cpt.hyperfine_es_factor * self.cpt.hyperfine_gs / self.flip_flop_gap).powi(2).min(1.0)
    }
}

/// 14N populations (m_I = -1, 0, +1) averaged over runs, every `record_every` cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingTrace {
    pub cycles: Vec<usize>,
    pub populations: Vec<[f64; 3]>,
}

impl CoolingTrace {
    pub fn final_populations(&self) -> [f64; 3] {
        *self.populations.last().expect("trace has the initial point")
    }
}

/// Monte Carlo over optical cycles at the field that puts `resonant_m_i` in
/// two-photon resonance. Each cycle excites with probability
/// 1 - contrast * L(delta), and each excitation flips m_I by one with the
/// flip-flop probability.
pub fn simulate_nuclear_cooling(_model: &NVModel, cfg: &CoolingConfig, seed: u64) -> Result<CoolingTrace> {
    cfg.validate()?;
    let fwhm = cfg.cpt.linewidth()?;
    let p_exc: [f64; 3] = std::array::from_fn(|k| {
        let delta = 2.0 * cfg.cpt.hyperfine_gs * (k as f64 - 1.0 - cfg.resonant_m_i as f64);
        1.0 - cfg.cpt.contrast * lorentzian(delta, 0.0, fwhm)
    });
    let p_ff = cfg.flip_flop_probability();
    let total: f64 = cfg.initial.iter().sum();
    let cum = [cfg.initial[0] / total, (cfg.initial[0] + cfg.initial[1]) / total];
    let n_rec = cfg.n_cycles / cfg.record_every + 1;
    let counts: Vec<Vec<[u32; 3]>> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|run| {
            let mut r = rng::stream(seed, run as u64);
            let u: f64 = r.random();
            let mut k = if u < cum[0] {
                0
            } else if u < cum[1] {
                1
            } else {
                2
            };
            let mut rec = vec![[0u32; 3]; n_rec];
            rec[0][k] += 1;
            for c in 1..=cfg.n_cycles {
                if r.random::<f64>() < p_exc[k] && r.random::<f64>() < p_ff {
                    k = match k {
                        0 => 1,
                        2 => 1,
                        _ if r.random::<bool>() => 0,
                        _ => 2,
                    };
                }
                if c % cfg.record_every == 0 {
                    rec[c / cfg.record_every][k] += 1;
                }
            }
            rec
        })
        .collect();
    let n = cfg.n_runs as f64;
    let populations =
        (0..n_rec).map(|i| std::array::from_fn(|k| counts.iter().map(|r| r[i][k] as f64).sum::<f64>() / n)).collect();
    let cycles = (0..n_rec).map(|i| i * cfg.record_every).collect();
    Ok(CoolingTrace { cycles, populations })
}
