use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::lm::{levenberg_marquardt, LmConfig};

/// Fit of p(t) = (1 + V cos(2 pi f t + phi)) / 2, t in ns and f in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationFit {
    /// Clamped to [0, 1].
    pub visibility: f64,
    pub frequency: f64,
    pub phase: f64,
    pub visibility_err: f64,
    pub frequency_err: f64,
    pub phase_err: f64,
    pub residual_norm: f64,
    pub converged: bool,
}

const TWO_PI_NS_MHZ: f64 = 2.0 * std::f64::consts::PI * 1e-3;

/// Best (a, b) for fixed f in 2p - 1 = a cos(w t) - b sin(w t); returns (a, b, cost).
fn linear_solve(t: &[f64], y: &[f64], f: f64) -> (f64, f64, f64) {
    let (mut cc, mut ss, mut cs, mut cy, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&tt, &v) in t.iter().zip(y) {
        let (s, c) = (TWO_PI_NS_MHZ * f * tt).sin_cos();
        let s = -s;
        cc += c * c;
        ss += s * s;
        cs += c * s;
        cy += c * v;
        sy += s * v;
    }
    let det = cc * ss - cs * cs;
    if det.abs() < 1e-300 {
        return (0.0, 0.0, y.iter().map(|v| v * v).sum());
    }
    let a = (cy * ss - sy * cs) / det;
    let b = (sy * cc - cy * cs) / det;
    let cost = t
        .iter()
        .zip(y)
        .map(|(&tt, &v)| {
            let (s, c) = (TWO_PI_NS_MHZ * f * tt).sin_cos();
            (a * c - b * s - v).powi(2)
        })
        .sum();
    (a, b, cost)
}

/// Fits a two-outcome conditional probability curve. `expected_frequency`
/// (MHz) seeds a grid search over [0.5, 1.5] times its value.
pub fn fit_oscillation(t: &[f64], p: &[f64], expected_frequency: f64) -> Result<OscillationFit> {
    if t.len() != p.len() {
        return Err(Error::InvalidData("time and probability lengths differ".into()));
    }
    if !(expected_frequency > 0.0) || !expected_frequency.is_finite() {
        return Err(Error::InvalidArgument("expected_frequency must be > 0".into()));
    }
    if t.iter().chain(p).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite value".into()));
    }
    let (tmin, tmax) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let period = 1e3 / expected_frequency;
    if t.len() < 6 || tmax - tmin < period {
        return Err(Error::InsufficientSpan(format!(
            "{} points over {} ns; need >= 6 points over one period of {period} ns",
            t.len(),
            tmax - tmin
        )));
    }
    let y: Vec<f64> = p.iter().map(|v| 2.0 * v - 1.0).collect();
    let step = 0.02 * 1e3 / (tmax - tmin);
    let (lo, hi) = (0.5 * expected_frequency, 1.5 * expected_frequency);
    let n_grid = ((hi - lo) / step).ceil() as usize + 1;
    let mut best = (expected_frequency, 0.0, 0.0, f64::INFINITY);
    for k in 0..n_grid {
        let f = lo + (hi - lo) * k as f64 / (n_grid - 1).max(1) as f64;
        let (a, b, cost) = linear_solve(t, &y, f);
        if cost < best.3 {
            best = (f, a, b, cost);
        }
    }
    let resid = |q: &[f64]| {
        t.iter()
            .zip(&y)
            .map(|(&tt, &v)| {
                let (s, c) = (TWO_PI_NS_MHZ * q[2] * tt).sin_cos();
                0.5 * (q[0] * c - q[1] * s - v)
            })
            .collect::<Vec<_>>()
    };
    let out = levenberg_marquardt(resid, &[best.1, best.2, best.0], LmConfig::default());
    let (a, b, f) = (out.params[0], out.params[1], out.params[2]);
    let v = a.hypot(b);
    let phase = b.atan2(a);
    let (va, vb) = (out.covariance[(0, 0)], out.covariance[(1, 1)]);
    let cab = out.covariance[(0, 1)];
    let (visibility_err, phase_err) = if v > 0.0 {
        let dv = ((a * a * va + b * b * vb + 2.0 * a * b * cab) / (v * v)).max(0.0).sqrt();
        let dp = ((b * b * va + a * a * vb - 2.0 * a * b * cab) / (v * v * v * v)).max(0.0).sqrt();
        (dv, dp)
    } else {
        (va.max(vb).max(0.0).sqrt(), std::f64::consts::PI)
    };
    Ok(OscillationFit {
        visibility: v.min(1.0),
        frequency: f,
        phase,
        visibility_err,
        frequency_err: out.std_err(2),
        phase_err,
        residual_norm: out.residual_norm,
        converged: out.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_curve_is_recovered_exactly() {
        let t: Vec<f64> = (0..40).map(|k| 0.5 * k as f64).collect();
        let p: Vec<f64> = t.iter().map(|&tt| 0.5 * (1.0 + (TWO_PI_NS_MHZ * 122.0 * tt + 0.3).cos())).collect();
        let fit = fit_oscillation(&t, &p, 122.0).unwrap();
        assert!((fit.visibility - 1.0).abs() < 1e-6);
        assert!((fit.frequency - 122.0).abs() < 1e-6);
        assert!((fit.phase - 0.3).abs() < 1e-6);
    }

    #[test]
    fn seeded_off_by_ten_percent() {
        let t: Vec<f64> = (0..60).map(|k| 0.4 * k as f64).collect();
        let p: Vec<f64> = t.iter().map(|&tt| 0.5 * (1.0 + 0.6 * (TWO_PI_NS_MHZ * 122.0 * tt).cos())).collect();
        let fit = fit_oscillation(&t, &p, 110.0).unwrap();
        assert!((fit.visibility - 0.6).abs() < 1e-6);
        assert!((fit.frequency - 122.0).abs() < 1e-6);
    }

    #[test]
    fn short_span_rejected() {
        let t: Vec<f64> = (0..10).map(|k| 0.1 * k as f64).collect();
        let p = vec![0.5; 10];
        assert!(matches!(fit_oscillation(&t, &p, 122.0), Err(Error::InsufficientSpan(_))));
    }
}
