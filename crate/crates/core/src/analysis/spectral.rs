use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};

/// Strongest nonzero frequency (MHz) of a real signal sampled every `dt` ns,
/// after removing its mean. Returns the frequency and the FFT bin width.
pub fn dominant_frequency(signal: &[f64], dt: f64) -> Result<(f64, f64)> {
    let n = signal.len();
    if n < 4 {
        return Err(Error::InsufficientSpan(format!("need at least 4 samples, got {n}")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be > 0".into()));
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let k = (1..=n / 2).max_by(|&a, &b| buf[a].norm_sqr().total_cmp(&buf[b].norm_sqr())).expect("n >= 4");
    let df = 1e3 / (n as f64 * dt);
    Ok((k as f64 * df, df))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sinusoid() {
        let dt = 0.2;
        let s: Vec<f64> = (0..500).map(|k| (2.0 * std::f64::consts::PI * 0.05 * k as f64 * dt).cos()).collect();
        let (f, df) = dominant_frequency(&s, dt).unwrap();
        assert!((f - 50.0).abs() <= df, "{f}");
        assert!((df - 10.0).abs() < 1e-12);
    }
}
