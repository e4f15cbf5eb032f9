use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    propagate_with_integral, steady_state_of, Drive, Generator, Level, NVModel, NoiseKind, NoiseProcess,
};
use crate::error::{check_finite, check_nonnegative, check_positive, Error, Result};
use crate::rng;
use crate::spectrum::{poisson, AxisUnit, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PleMode {
    /// Repump before every probe pulse; the diffusion detuning is redrawn each time.
    RepumpEachPoint,
    /// One repump per scan; the probe stays on while the laser is stepped.
    RepumpEachScan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PLEProtocol {
    pub mode: PleMode,
    /// Time spent at each scan point (ns).
    pub dwell: f64,
    pub repump: f64,
    pub probe: f64,
    /// Laser detunings from the target transition (MHz), strictly monotone.
    pub axis: Vec<f64>,
    pub n_scans: usize,
    pub target: Level,
    pub probe_rabi: f64,
    /// Microwave Rabi frequency on g0 <-> g+-1 that keeps the spin from shelving.
    pub mw_mixing_rabi: f64,
    /// The g+1 field is detuned by +this and the g-1 field by -this (MHz), so
    /// the two fields never share a Raman resonance that traps population.
    pub mw_mixing_detuning: f64,
    pub collection_eff: f64,
    /// Spacing of the precomputed response grid (MHz).
    pub grid_step: f64,
}

impl Default for PLEProtocol {
    fn default() -> Self {
        Self {
            mode: PleMode::RepumpEachPoint,
            dwell: 2e6,
            repump: 1e3,
            probe: 1e4,
            axis: (0..=80).map(|k| -40.0 + k as f64).collect(),
            n_scans: 1,
            target: Level::Ey,
            probe_rabi: 2.0,
            mw_mixing_rabi: 2.0,
            mw_mixing_detuning: 1.0,
            collection_eff: 0.05,
            grid_step: 0.5,
        }
    }
}

impl PLEProtocol {
    pub fn validate(&self) -> Result<()> {
        check_positive("dwell", self.dwell)?;
        check_positive("repump", self.repump)?;
        check_positive("probe", self.probe)?;
        check_nonnegative("probe_rabi", self.probe_rabi)?;
        check_nonnegative("mw_mixing_rabi", self.mw_mixing_rabi)?;
        check_finite("mw_mixing_detuning", self.mw_mixing_detuning)?;
        check_positive("grid_step", self.grid_step)?;
        if !(0.0..=1.0).contains(&self.collection_eff) {
            return Err(Error::InvalidParameter {
                name: "collection_eff",
                reason: format!("must be in [0, 1], got {}", self.collection_eff),
            });
        }
        if self.axis.is_empty() {
            return Err(Error::InvalidProtocol("scan axis is empty".into()));
        }
        if self.axis.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidProtocol("scan axis has non-finite entries".into()));
        }
        let up = self.axis.windows(2).all(|w| w[1] > w[0]);
        let down = self.axis.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::InvalidProtocol("scan axis must be strictly monotone".into()));
        }
        if self.n_scans == 0 {
            return Err(Error::InvalidProtocol("n_scans must be >= 1".into()));
        }
        if !self.target.is_excited() {
            return Err(Error::InvalidProtocol(format!("target {} is not an excited level", self.target.label())));
        }
        Ok(())
    }

    fn drives(&self, detuning: f64) -> Vec<Drive> {
        let mut d = vec![Drive::optical(Level::G0, self.target, self.probe_rabi, detuning)];
        if self.mw_mixing_rabi > 0.0 {
            d.push(Drive::microwave(Level::GPlus, self.mw_mixing_rabi, self.mw_mixing_detuning));
            d.push(Drive::microwave(Level::GMinus, self.mw_mixing_rabi, -self.mw_mixing_detuning));
        }
        d
    }
}

/// Detected counts versus effective detuning on a uniform grid, linearly
/// interpolated and zero outside.
struct Response {
    start: f64,
    step: f64,
    values: Vec<f64>,
}

impl Response {
    fn at(&self, x: f64) -> f64 {
        let u = (x - self.start) / self.step;
        if !(u >= 0.0) || u > (self.values.len() - 1) as f64 {
            return 0.0;
        }
        let k = (u.floor() as usize).min(self.values.len() - 2);
        let f = u - k as f64;
        self.values[k] * (1.0 - f) + self.values[k + 1] * f
    }
}

fn response(model: &NVModel, p: &PLEProtocol, lo: f64, hi: f64) -> Result<Response> {
    let n = ((hi - lo) / p.grid_step).ceil() as usize + 1;
    let xs: Vec<f64> = (0..n).map(|k| lo + k as f64 * p.grid_step).collect();
    let gamma_ns = 1.0 / model.excited_lifetime;
    let mut support = [false; crate::dynamics::N_LEVELS];
    support[Level::G0.index()] = true;
    let values = xs
        .par_iter()
        .map(|&x| -> Result<f64> {
            let g = Generator::reduced(model, &p.drives(x), 0.0, &support)?;
            let excited: Vec<usize> =
                (0..g.dim()).filter(|&i| crate::dynamics::Level::ALL[g.kept()[i]].is_excited()).collect();
            match p.mode {
                PleMode::RepumpEachPoint => {
                    let mut rho0 = nalgebra::DMatrix::zeros(g.dim(), g.dim());
                    let i0 = g.kept().iter().position(|&k| k == Level::G0.index()).expect("g0 kept");
                    rho0[(i0, i0)] = num_complex::Complex64::new(1.0, 0.0);
                    let (_, integral) = propagate_with_integral(&g, &rho0, p.probe);
                    let pop: f64 = excited.iter().map(|&i| integral[(i, i)].re).sum();
                    Ok(p.collection_eff * pop * gamma_ns)
                }
                PleMode::RepumpEachScan => {
                    let rho = steady_state_of(&g, false)?;
                    let pop: f64 = excited.iter().map(|&i| rho[(i, i)].re).sum();
                    Ok(p.collection_eff * pop * gamma_ns * p.dwell)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Response { start: lo, step: p.grid_step, values })
}

/// PLE scans over `protocol.axis`. Spectral diffusion enters as a common
/// shift `s` of the excited levels, so a point at laser detuning `x` sees
/// the response at `x - s`.
pub fn simulate_ple(model: &NVModel, protocol: &PLEProtocol, noise: &NoiseProcess, seed: u64) -> Result<Spectrum> {
    protocol.validate()?;
    noise.validate()?;
    let (amin, amax) = protocol.axis.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let pad = 6.0 * noise.stationary_std + 100.0 * (1.0 + protocol.probe_rabi / 10.0);
    let resp = response(model, protocol, amin - pad, amax + pad)?;
    let cycle = protocol.repump + protocol.probe;
    let n_reps = ((protocol.dwell / cycle).floor() as usize).max(1);
    let rows: Vec<(Vec<f64>, Vec<u64>)> = (0..protocol.n_scans)
        .into_par_iter()
        .map(|scan| {
            let mut r = rng::stream(seed, scan as u64);
            let mut s = noise.stationary_draw(&mut r);
            let mut expected = Vec::with_capacity(protocol.axis.len());
            for &x in &protocol.axis {
                let c = match (protocol.mode, noise.kind) {
                    (PleMode::RepumpEachPoint, NoiseKind::RepumpJump) => {
                        (0..n_reps).map(|_| resp.at(x - noise.stationary_draw(&mut r))).sum()
                    }
                    (PleMode::RepumpEachPoint, NoiseKind::OrnsteinUhlenbeck) => (0..n_reps)
                        .map(|_| {
                            s = noise.ou_step(s, cycle, &mut r);
                            resp.at(x - s)
                        })
                        .sum(),
                    (PleMode::RepumpEachScan, NoiseKind::RepumpJump) => resp.at(x - s),
                    (PleMode::RepumpEachScan, NoiseKind::OrnsteinUhlenbeck) => {
                        const SUB: usize = 16;
                        (0..SUB)
                            .map(|_| {
                                s = noise.ou_step(s, protocol.dwell / SUB as f64, &mut r);
                                resp.at(x - s)
                            })
                            .sum::<f64>()
                            / SUB as f64
                    }
                };
                expected.push(c);
            }
            let sampled = expected.iter().map(|&e| poisson(e, &mut r)).collect();
            (expected, sampled)
        })
        .collect();
    Ok(Spectrum::from_scans(AxisUnit::Mhz, protocol.axis.clone(), rows))
}
