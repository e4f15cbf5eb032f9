use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::lm::{levenberg_marquardt, LmConfig};
use super::FitResult;

/// Initial guess for one line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakGuess {
    pub center: f64,
    pub fwhm: f64,
    /// Signed height above the offset (negative for dips).
    pub amplitude: f64,
}

/// Lorentzian of unit height.
pub fn lorentzian(x: f64, center: f64, fwhm: f64) -> f64 {
    let h = 0.5 * fwhm;
    h * h / ((x - center) * (x - center) + h * h)
}

fn check_axis(x: &[f64], y: &[f64], min_len: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidData(format!("axis has {} points, data {}", x.len(), y.len())));
    }
    if x.len() < min_len {
        return Err(Error::InvalidData(format!("need at least {min_len} points, got {}", x.len())));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidData("axis must be strictly increasing".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite value".into()));
    }
    Ok(())
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn smooth(y: &[f64], half: usize) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(y.len());
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn auto_init(x: &[f64], y: &[f64], n_peaks: usize) -> (Vec<PeakGuess>, f64) {
    let base = median(y);
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let sign = if base - lo > hi - base { -1.0 } else { 1.0 };
    let half = (y.len() / 200).max(1);
    let s = smooth(y, half);
    let dev: Vec<f64> = s.iter().map(|v| sign * (v - base)).collect();
    // extrema: sign changes of the smoothed derivative from + to -
    let mut cands: Vec<usize> =
        (1..dev.len() - 1).filter(|&i| dev[i] - dev[i - 1] > 0.0 && dev[i + 1] - dev[i] <= 0.0).collect();
    cands.sort_by(|&a, &b| dev[b].total_cmp(&dev[a]));
    let mut picked: Vec<usize> = Vec::new();
    for &c in &cands {
        if picked.len() == n_peaks {
            break;
        }
        if picked.iter().all(|&p| p.abs_diff(c) > 2) {
            picked.push(c);
        }
    }
    let mut k = 0;
    while picked.len() < n_peaks {
        // too few extrema: spread the remaining guesses over the axis
        picked.push((k + 1) * (x.len() - 1) / (n_peaks + 1));
        k += 1;
    }
    let dx = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let guesses = picked
        .iter()
        .map(|&i| {
            let h = dev[i].max(0.0);
            let mut l = i;
            while l > 0 && dev[l] > h / 2.0 {
                l -= 1;
            }
            let mut r = i;
            while r + 1 < dev.len() && dev[r] > h / 2.0 {
                r += 1;
            }
            let mut fwhm = (x[r] - x[l]).max(2.0 * dx);
            if picked.len() > 1 {
                let nearest =
                    picked.iter().filter(|&&j| j != i).map(|&j| (x[j] - x[i]).abs()).fold(f64::INFINITY, f64::min);
                fwhm = fwhm.min(nearest).max(2.0 * dx);
            }
            PeakGuess { center: x[i], fwhm, amplitude: sign * h.max(1e-12 * (hi - lo)) }
        })
        .collect();
    (guesses, base)
}

fn peak_key(name: &str, k: usize, n: usize) -> String {
    if n == 1 {
        name.to_string()
    } else {
        format!("{name}_{k}")
    }
}

fn non_converged(n_peaks: usize, offset: f64) -> FitResult {
    let mut params = BTreeMap::new();
    let mut unc = BTreeMap::new();
    for k in 0..n_peaks {
        for name in ["center", "fwhm", "amplitude"] {
            params.insert(peak_key(name, k, n_peaks), f64::NAN);
            unc.insert(peak_key(name, k, n_peaks), f64::NAN);
        }
    }
    params.insert("offset".into(), offset);
    unc.insert("offset".into(), 0.0);
    FitResult { params, uncertainties: unc, residual_norm: 0.0, converged: false, n_iter: 0 }
}

/// Least-squares fit of `n_peaks` Lorentzians plus a constant offset.
/// Widths are fitted on a log scale, so fitted FWHMs are positive.
pub fn fit_lorentzian(x: &[f64], y: &[f64], n_peaks: usize, init: Option<&[PeakGuess]>) -> Result<FitResult> {
    if !(1..=3).contains(&n_peaks) {
        return Err(Error::InvalidArgument(format!("n_peaks must be 1, 2 or 3, got {n_peaks}")));
    }
    check_axis(x, y, 3 * (3 * n_peaks + 1))?;
    let (guesses, base) = match init {
        Some(g) if g.len() == n_peaks => (g.to_vec(), median(y)),
        Some(g) => {
            return Err(Error::InvalidArgument(format!("{} guesses for {n_peaks} peaks", g.len())));
        }
        None => auto_init(x, y, n_peaks),
    };
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1e-300) {
        return Ok(non_converged(n_peaks, base));
    }
    let mut p0 = Vec::with_capacity(3 * n_peaks + 1);
    for g in &guesses {
        p0.extend([g.center, g.fwhm.max(1e-12).ln(), g.amplitude]);
    }
    p0.push(base);
    let model = |p: &[f64], xv: f64| {
        let mut v = p[3 * n_peaks];
        for k in 0..n_peaks {
            v += p[3 * k + 2] * lorentzian(xv, p[3 * k], p[3 * k + 1].exp());
        }
        v
    };
    let resid = |p: &[f64]| x.iter().zip(y).map(|(&xv, &yv)| model(p, xv) - yv).collect::<Vec<_>>();
    let out = levenberg_marquardt(resid, &p0, LmConfig::default());

    let mut params = BTreeMap::new();
    let mut unc = BTreeMap::new();
    let mut ok = out.converged;
    for k in 0..n_peaks {
        let (c, s, a) = (out.params[3 * k], out.params[3 * k + 1], out.params[3 * k + 2]);
        let fwhm = s.exp();
        let (sc, ss, sa) = (out.std_err(3 * k), out.std_err(3 * k + 1), out.std_err(3 * k + 2));
        params.insert(peak_key("center", k, n_peaks), c);
        params.insert(peak_key("fwhm", k, n_peaks), fwhm);
        params.insert(peak_key("amplitude", k, n_peaks), a);
        unc.insert(peak_key("center", k, n_peaks), sc);
        unc.insert(peak_key("fwhm", k, n_peaks), fwhm * ss);
        unc.insert(peak_key("amplitude", k, n_peaks), sa);
        let significant = a.abs() > 3.0 * sa || (sa == 0.0 && a != 0.0);
        let inside = c >= x[0] && c <= x[x.len() - 1];
        if !(fwhm.is_finite() && fwhm > 0.0 && significant && inside) {
            ok = false;
        }
    }
    params.insert("offset".into(), out.params[3 * n_peaks]);
    unc.insert("offset".into(), out.std_err(3 * n_peaks));
    Ok(FitResult { params, uncertainties: unc, residual_norm: out.residual_norm, converged: ok, n_iter: out.n_iter })
}

/// Fit of `amplitude * exp(-(t - t[0]) / tau) + offset`; the offset is held at
/// zero unless `with_offset`.
pub fn fit_exponential(t: &[f64], y: &[f64], with_offset: bool) -> Result<FitResult> {
    check_axis(t, y, if with_offset { 4 } else { 3 })?;
    let t0 = t[0];
    let span = t[t.len() - 1] - t0;
    let off0 = if with_offset { y[y.len() - 1].min(y[0]) } else { 0.0 };
    // log-linear initial estimate on the points well above the floor
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(_, &v)| v - off0 > 1e-12 * (y[0] - off0).abs())
        .map(|(&tt, &v)| (tt - t0, (v - off0).ln()))
        .collect();
    let (tau0, a0) = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
        let (mx, my) = (sx / n, sy / n);
        let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + (p.0 - mx) * (p.1 - my), b + (p.0 - mx).powi(2)));
        let slope = sxy / sxx;
        let tau = if slope < 0.0 { -1.0 / slope } else { span };
        (tau, (my - slope * mx).exp())
    } else {
        (span / 2.0, y[0] - off0)
    };
    let mut p0 = vec![a0, tau0.max(1e-9).ln()];
    if with_offset {
        p0.push(off0);
    }
    let resid = |p: &[f64]| {
        let off = if with_offset { p[2] } else { 0.0 };
        t.iter().zip(y).map(|(&tt, &v)| p[0] * (-(tt - t0) / p[1].exp()).exp() + off - v).collect::<Vec<_>>()
    };
    let out = levenberg_marquardt(resid, &p0, LmConfig::default());
    let tau = out.params[1].exp();
    let mut params = BTreeMap::from([("amplitude".to_string(), out.params[0]), ("tau".to_string(), tau)]);
    let mut unc =
        BTreeMap::from([("amplitude".to_string(), out.std_err(0)), ("tau".to_string(), tau * out.std_err(1))]);
    params.insert("offset".into(), if with_offset { out.params[2] } else { 0.0 });
    unc.insert("offset".into(), if with_offset { out.std_err(2) } else { 0.0 });
    Ok(FitResult {
        params,
        uncertainties: unc,
        residual_norm: out.residual_norm,
        converged: out.converged && tau.is_finite(),
        n_iter: out.n_iter,
    })
}
