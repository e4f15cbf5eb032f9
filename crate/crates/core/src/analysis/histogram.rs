use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts in left-closed bins `[lo + k bin, lo + (k + 1) bin)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub start: f64,
    pub bin: f64,
    pub counts: Vec<u64>,
    /// Events outside the window, including the closing edge.
    pub dropped: u64,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|k| self.start + (k as f64 + 0.5) * self.bin).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Number of bins covering `window`; a partial last bin is kept.
pub fn bin_count(bin: f64, window: (f64, f64)) -> Result<usize> {
    if !(bin > 0.0) || !bin.is_finite() {
        return Err(Error::InvalidBinning(format!("bin width must be > 0, got {bin}")));
    }
    let (lo, hi) = window;
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidBinning(format!("window [{lo}, {hi}] is not ordered")));
    }
    Ok(((hi - lo) / bin - 1e-9).ceil().max(1.0) as usize)
}

pub fn histogram(timestamps: &[f64], bin: f64, window: (f64, f64)) -> Result<Histogram> {
    let n = bin_count(bin, window)?;
    let (lo, hi) = window;
    let mut counts = vec![0u64; n];
    let mut dropped = 0;
    for &t in timestamps {
        if !(t >= lo && t < hi) {
            dropped += 1;
            continue;
        }
        let k = ((t - lo) / bin).floor() as usize;
        match counts.get_mut(k) {
            Some(c) => *c += 1,
            None => dropped += 1,
        }
    }
    Ok(Histogram { start: lo, bin, counts, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_zero_bins() {
        let h = histogram(&[], 1.0, (0.0, 5.0)).unwrap();
        assert_eq!(h.counts, vec![0; 5]);
        assert_eq!(h.dropped, 0);
    }

    #[test]
    fn boundaries_are_left_closed() {
        let h = histogram(&[0.0, 1.0, 2.0, 3.0], 1.0, (0.0, 3.0)).unwrap();
        assert_eq!(h.counts, vec![1, 1, 1]);
        assert_eq!(h.dropped, 1);
        assert_eq!(h.centers(), vec![0.5, 1.5, 2.5]);
    }

    #[test]
    fn conservation() {
        let ts: Vec<f64> = (0..1000).map(|k| (k as f64 * 0.37) % 13.0 - 2.0).collect();
        let h = histogram(&ts, 0.7, (0.0, 9.0)).unwrap();
        assert_eq!(h.total() + h.dropped, ts.len() as u64);
    }

    #[test]
    fn invalid_binning() {
        assert!(histogram(&[], 0.0, (0.0, 1.0)).is_err());
        assert!(histogram(&[], 1.0, (2.0, 1.0)).is_err());
    }
}
