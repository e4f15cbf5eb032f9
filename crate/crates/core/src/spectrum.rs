//! Count spectra shared by the scanning experiments.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisUnit {
    Mhz,
    Gauss,
}

/// Expected and Poisson-sampled counts over a scan axis. Totals are summed
/// over scans; `per_scan` holds the single-scan rows when there are several.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub unit: AxisUnit,
    pub axis: Vec<f64>,
    pub expected: Vec<f64>,
    pub sampled: Vec<u64>,
    pub per_scan: Option<Vec<Vec<u64>>>,
    pub per_scan_expected: Option<Vec<Vec<f64>>>,
}

/// Shortest round-trip decimal, switching to exponent form outside [1e-5, 1e16).
pub fn csv_number(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// One Poisson draw; zero mean gives zero.
pub fn poisson(mean: f64, rng: &mut impl Rng) -> u64 {
    if mean > 0.0 && mean.is_finite() {
        Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
    } else {
        0
    }
}

impl Spectrum {
    /// Spectrum from per-scan expected rows, sampling each row with `rngs[k]`.
    pub fn from_scans(unit: AxisUnit, axis: Vec<f64>, rows: Vec<(Vec<f64>, Vec<u64>)>) -> Self {
        let n = axis.len();
        let mut expected = vec![0.0; n];
        let mut sampled = vec![0u64; n];
        for (e, s) in &rows {
            for i in 0..n {
                expected[i] += e[i];
                sampled[i] += s[i];
            }
        }
        let (per_scan, per_scan_expected) = if rows.len() > 1 {
            let (e, s): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
            (Some(s), Some(e))
        } else {
            (None, None)
        };
        Self { unit, axis, expected, sampled, per_scan, per_scan_expected }
    }

    pub fn sampled_f64(&self) -> Vec<f64> {
        self.sampled.iter().map(|&c| c as f64).collect()
    }

    pub fn per_scan_f64(&self) -> Option<Vec<Vec<f64>>> {
        self.per_scan.as_ref().map(|rows| rows.iter().map(|r| r.iter().map(|&c| c as f64).collect()).collect())
    }

    /// Comma-separated `axis,expected,sampled` with a header row and LF endings.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("axis,expected,sampled\n");
        for i in 0..self.axis.len() {
            let _ = writeln!(s, "{},{},{}", csv_number(self.axis[i]), csv_number(self.expected[i]), self.sampled[i]);
        }
        s
    }
}
