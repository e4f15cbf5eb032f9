use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analysis::{fit_oscillation, OscillationFit};
use crate::dynamics::lifetime_from_linewidth;
use crate::error::{check_finite, check_nonnegative, check_positive, Error, Result};
use crate::rng;
use crate::spectrum::csv_number;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotonBasis {
    /// H / V detection; the spin is read in the superposition basis.
    Linear,
    /// sigma+ / sigma- detection; the spin is read in the ms = +-1 basis.
    Circular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
    SigmaPlus,
    SigmaMinus,
}

impl Polarization {
    pub fn label(self) -> &'static str {
        match self {
            Self::H => "H",
            Self::V => "V",
            Self::SigmaPlus => "sigma_plus",
            Self::SigmaMinus => "sigma_minus",
        }
    }

    /// Detector index: 0 for H and sigma+, 1 for V and sigma-.
    pub fn channel(self) -> u8 {
        match self {
            Self::H | Self::SigmaPlus => 0,
            Self::V | Self::SigmaMinus => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntanglementConfig {
    /// Splitting of the two emission frequencies (MHz).
    pub delta_omega: f64,
    pub phi_plus_minus: f64,
    /// Gaussian detection jitter (ns, standard deviation).
    pub jitter_std: f64,
    /// Ratio of signal to background events in the window; `None` for no background.
    pub signal_to_background: Option<f64>,
    /// Probability that the spin is replaced by a fully mixed state.
    pub depolarization: f64,
    pub n_events: usize,
    pub excited_lifetime: f64,
    /// Detection window (ns).
    pub window: f64,
    pub bin: f64,
    pub basis: PhotonBasis,
}

impl Default for EntanglementConfig {
    fn default() -> Self {
        Self {
            delta_omega: 122.0,
            phi_plus_minus: 0.0,
            jitter_std: 0.3,
            signal_to_background: None,
            depolarization: 0.0,
            n_events: 100_000,
            excited_lifetime: lifetime_from_linewidth(13.0),
            window: 20.0,
            bin: 1.0,
            basis: PhotonBasis::Linear,
        }
    }
}

impl EntanglementConfig {
    /// No jitter, no depolarization, no background.
    pub fn ideal() -> Self {
        Self { jitter_std: 0.0, ..Self::default() }
    }

    /// Imperfections calibrated so the fidelity bound lands near 0.69.
    pub fn measured_budget() -> Self {
        Self { signal_to_background: Some(8.0), depolarization: 0.25, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("delta_omega", self.delta_omega)?;
        check_finite("phi_plus_minus", self.phi_plus_minus)?;
        check_nonnegative("jitter_std", self.jitter_std)?;
        if let Some(sb) = self.signal_to_background {
            check_positive("signal_to_background", sb)?;
        }
        if !(0.0..=1.0).contains(&self.depolarization) {
            return Err(Error::InvalidParameter {
                name: "depolarization",
                reason: format!("must be in [0, 1], got {}", self.depolarization),
            });
        }
        if self.n_events == 0 {
            return Err(Error::InvalidParameter { name: "n_events", reason: "must be >= 1".into() });
        }
        check_positive("excited_lifetime", self.excited_lifetime)?;
        check_positive("window", self.window)?;
        check_positive("bin", self.bin)?;
        if self.bin > self.window {
            return Err(Error::InvalidBinning(format!("bin {} ns exceeds window {} ns", self.bin, self.window)));
        }
        Ok(())
    }

    fn alpha(&self, t: f64) -> f64 {
        2.0 * PI * self.delta_omega * t * 1e-3 + self.phi_plus_minus
    }

    fn background_fraction(&self) -> f64 {
        self.signal_to_background.map_or(0.0, |sb| 1.0 / (1.0 + sb))
    }
}

/// Probability of the spin outcome +1 given a photon detected in `basis`
/// (H or V) at `t_d` ns: (1 +- cos alpha) / 2.
pub fn entangled_conditional_probability(basis: Polarization, t_d: f64, cfg: &EntanglementConfig) -> Result<f64> {
    if !(t_d >= 0.0) {
        return Err(Error::InvalidArgument(format!("t_d must be >= 0, got {t_d}")));
    }
    let c = cfg.alpha(t_d).cos();
    match basis {
        Polarization::H => Ok(0.5 * (1.0 + c)),
        Polarization::V => Ok(0.5 * (1.0 - c)),
        _ => Err(Error::InvalidArgument("conditional oscillation is defined for H and V only".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub event_id: u64,
    pub channel: u8,
    pub basis: Polarization,
    pub t_d_ns: f64,
    /// Spin measurement outcome, +1 or -1.
    pub spin: i8,
}

pub fn records_to_csv(records: &[DetectionRecord]) -> String {
    let mut s = String::from("event_id,channel,basis,t_d_ns,spin\n");
    for r in records {
        let _ = writeln!(s, "{},{},{},{},{}", r.event_id, r.channel, r.basis.label(), csv_number(r.t_d_ns), r.spin);
    }
    s
}

/// P(spin = +1) per time bin for each detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalCurves {
    pub centers: Vec<f64>,
    pub expected: [Vec<f64>; 2],
    pub sampled: [Vec<f64>; 2],
    pub counts: [Vec<u64>; 2],
}

/// Spin-photon correlations in the circular basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    /// P(+1 | sigma-).
    pub plus_given_sigma_minus: f64,
    /// P(-1 | sigma+).
    pub minus_given_sigma_plus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntanglementRun {
    pub records: Vec<DetectionRecord>,
    pub curves: ConditionalCurves,
    pub expected_correlations: Correlations,
    pub sampled_correlations: Correlations,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Bin-averaging factor of an oscillation at `frequency` MHz over `bin` ns.
pub fn bin_attenuation(frequency: f64, bin: f64) -> f64 {
    sinc(PI * frequency * 1e-3 * bin)
}

/// Detection-time density of signal photons: exponential emission convolved
/// with the Gaussian jitter, integrated over [a, b].
fn signal_mass(a: f64, b: f64, tau: f64, jitter: f64) -> f64 {
    let n = 200;
    let h = (b - a) / n as f64;
    let density = |t: f64| -> f64 {
        if jitter <= 0.0 {
            return if t >= 0.0 { (-t / tau).exp() / tau } else { 0.0 };
        }
        let m = 400;
        let lo = (t - 6.0 * jitter).max(0.0);
        let hi = t + 6.0 * jitter;
        if hi <= lo {
            return 0.0;
        }
        let dh = (hi - lo) / m as f64;
        (0..=m)
            .map(|k| {
                let s = lo + k as f64 * dh;
                let w = if k == 0 || k == m { 0.5 } else { 1.0 };
                let u = (t - s) / jitter;
                w * (-s / tau).exp() / tau * (-0.5 * u * u).exp()
            })
            .sum::<f64>()
            * dh
            / (jitter * (2.0 * PI).sqrt())
    };
    (0..=n)
        .map(|k| {
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * density(a + k as f64 * h)
        })
        .sum::<f64>()
        * h
        / 3.0
}

fn expected_curves(cfg: &EntanglementConfig) -> (Vec<f64>, [Vec<f64>; 2]) {
    let n_bins = (cfg.window / cfg.bin).floor() as usize;
    let f_bg = cfg.background_fraction();
    let tau = cfg.excited_lifetime;
    let sig_window = signal_mass(0.0, cfg.window, tau, cfg.jitter_std);
    let damping = (-0.5 * (2.0 * PI * cfg.delta_omega * 1e-3 * cfg.jitter_std).powi(2)).exp();
    let att = bin_attenuation(cfg.delta_omega, cfg.bin);
    let lag = cfg.jitter_std * cfg.jitter_std / tau;
    let mut centers = Vec::with_capacity(n_bins);
    let mut h = Vec::with_capacity(n_bins);
    let mut v = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let (lo, hi) = (b as f64 * cfg.bin, (b + 1) as f64 * cfg.bin);
        let c = 0.5 * (lo + hi);
        let s = (1.0 - f_bg) * signal_mass(lo, hi, tau, cfg.jitter_std) / sig_window;
        let bg = f_bg * cfg.bin / cfg.window;
        let osc = 0.5 * (1.0 - cfg.depolarization) * damping * att * cfg.alpha(c - lag).cos();
        let frac = if s + bg > 0.0 { s / (s + bg) } else { 0.0 };
        centers.push(c);
        h.push(0.5 + frac * osc);
        v.push(0.5 - frac * osc);
    }
    (centers, [h, v])
}

/// Monte Carlo of heralded spin-photon events. Signal photons are emitted
/// after an exponential delay and time-stamped with Gaussian jitter;
/// background events are uniform over the window with random photon and
/// spin outcomes. Depolarization replaces the spin by a mixed state.
pub fn simulate_entanglement_run(cfg: &EntanglementConfig, seed: u64) -> Result<EntanglementRun> {
    cfg.validate()?;
    let mut r = rng::stream(seed, 0);
    let emission = Exp::new(1.0 / cfg.excited_lifetime).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let f_bg = cfg.background_fraction();
    let mut records = Vec::with_capacity(cfg.n_events);
    for id in 0..cfg.n_events as u64 {
        let background = r.random::<f64>() < f_bg;
        let first = r.random::<bool>();
        let basis = match (cfg.basis, first) {
            (PhotonBasis::Linear, true) => Polarization::H,
            (PhotonBasis::Linear, false) => Polarization::V,
            (PhotonBasis::Circular, true) => Polarization::SigmaPlus,
            (PhotonBasis::Circular, false) => Polarization::SigmaMinus,
        };
        let (t_d, p_plus) = if background {
            (r.random::<f64>() * cfg.window, 0.5)
        } else {
            let t_e: f64 = emission.sample(&mut r);
            let z: f64 = StandardNormal.sample(&mut r);
            let ideal = match basis {
                Polarization::SigmaMinus => 1.0,
                Polarization::SigmaPlus => 0.0,
                lin => entangled_conditional_probability(lin, t_e, cfg)?,
            };
            let d = cfg.depolarization;
            (t_e + cfg.jitter_std * z, (1.0 - d) * ideal + 0.5 * d)
        };
        let spin = if r.random::<f64>() < p_plus { 1 } else { -1 };
        records.push(DetectionRecord { event_id: id, channel: basis.channel(), basis, t_d_ns: t_d, spin });
    }

    let (centers, expected) = expected_curves(cfg);
    let n_bins = centers.len();
    let mut counts = [vec![0u64; n_bins], vec![0u64; n_bins]];
    let mut plus = [vec![0u64; n_bins], vec![0u64; n_bins]];
    let mut circ = [[0u64; 2]; 2];
    for rec in &records {
        let ch = rec.channel as usize;
        if cfg.basis == PhotonBasis::Circular {
            circ[ch][0] += 1;
            let hit = (ch == 1 && rec.spin == 1) || (ch == 0 && rec.spin == -1);
            circ[ch][1] += hit as u64;
        }
        if rec.t_d_ns >= 0.0 && rec.t_d_ns < n_bins as f64 * cfg.bin {
            let b = ((rec.t_d_ns / cfg.bin) as usize).min(n_bins - 1);
            counts[ch][b] += 1;
            plus[ch][b] += (rec.spin == 1) as u64;
        }
    }
    let ratio = |k: u64, n: u64| if n > 0 { k as f64 / n as f64 } else { f64::NAN };
    let sampled = [0, 1].map(|ch| (0..n_bins).map(|b| ratio(plus[ch][b], counts[ch][b])).collect());
    let corr_ideal = (1.0 - f_bg) * (1.0 - 0.5 * cfg.depolarization) + 0.5 * f_bg;
    let expected_correlations = Correlations { plus_given_sigma_minus: corr_ideal, minus_given_sigma_plus: corr_ideal };
    let sampled_correlations = Correlations {
        plus_given_sigma_minus: ratio(circ[1][1], circ[1][0]),
        minus_given_sigma_plus: ratio(circ[0][1], circ[0][0]),
    };
    Ok(EntanglementRun {
        records,
        curves: ConditionalCurves { centers, expected, sampled, counts },
        expected_correlations,
        sampled_correlations,
    })
}

/// Oscillation fit of one conditional curve with the visibility divided by
/// the bin-averaging factor. Bins without events are skipped.
pub fn fit_conditional_curve(centers: &[f64], p: &[f64], cfg: &EntanglementConfig) -> Result<OscillationFit> {
    let (t, y): (Vec<f64>, Vec<f64>) =
        centers.iter().zip(p).filter(|(_, v)| v.is_finite()).map(|(&a, &b)| (a, b)).unzip();
    let mut fit = fit_oscillation(&t, &y, cfg.delta_omega)?;
    let att = bin_attenuation(fit.frequency, cfg.bin);
    if att.abs() < 1e-3 {
        return Err(Error::InvalidBinning("bin width averages the oscillation away".into()));
    }
    fit.visibility = (fit.visibility / att.abs()).min(1.0);
    fit.visibility_err /= att.abs();
    Ok(fit)
}

/// Lower bound on the fidelity with the maximally entangled state from the
/// two circular-basis correlations a = P(+1|sigma-), b = P(-1|sigma+) and the
/// linear-basis visibility V: (a + b) / 4 + V sqrt(a b) / 2.
pub fn fidelity_lower_bound(p_diag: [f64; 2], visibility: f64) -> Result<f64> {
    for (name, v) in [("p_diag[0]", p_diag[0]), ("p_diag[1]", p_diag[1]), ("visibility", visibility)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("{name} must be in [0, 1], got {v}")));
        }
    }
    let [a, b] = p_diag;
    Ok(0.25 * (a + b) + 0.5 * visibility * (a * b).sqrt())
}
