use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::lorentz::fit_lorentzian;
use super::FitResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanStatistics {
    /// Fitted line center per scan; `None` where the fit did not converge.
    pub centers: Vec<Option<f64>>,
    /// Standard deviation of successive center differences divided by sqrt 2.
    pub jump_std: f64,
    pub mean_single_fwhm: f64,
    pub averaged_fwhm: f64,
    pub averaged_fit: FitResult,
}

/// Per-scan and averaged single-line fits of repeated scans over `axis`.
pub fn scan_statistics(axis: &[f64], per_scan: &[Vec<f64>]) -> Result<ScanStatistics> {
    if per_scan.len() < 2 {
        return Err(Error::InvalidData(format!("need at least 2 scans, got {}", per_scan.len())));
    }
    if per_scan.iter().any(|row| row.len() != axis.len()) {
        return Err(Error::InvalidData("scan rows must match the axis length".into()));
    }
    let fits: Vec<Result<FitResult>> = per_scan.par_iter().map(|row| fit_lorentzian(axis, row, 1, None)).collect();
    let mut centers = Vec::with_capacity(fits.len());
    let mut widths = Vec::new();
    for f in fits {
        let f = f?;
        if f.converged {
            centers.push(f.get("center"));
            widths.push(f.get("fwhm").unwrap_or(f64::NAN));
        } else {
            centers.push(None);
        }
    }
    let good: Vec<f64> = centers.iter().flatten().copied().collect();
    if good.is_empty() {
        return Err(Error::NoSignal("no single-scan fit converged".into()));
    }
    let jump_std = if good.len() >= 3 {
        let d: Vec<f64> = good.windows(2).map(|w| w[1] - w[0]).collect();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt() / 2f64.sqrt()
    } else if good.len() == 2 {
        (good[1] - good[0]).abs() / 2f64.sqrt()
    } else {
        0.0
    };
    let mean_single_fwhm = widths.iter().sum::<f64>() / widths.len() as f64;
    let summed: Vec<f64> = (0..axis.len()).map(|i| per_scan.iter().map(|r| r[i]).sum()).collect();
    let averaged_fit = fit_lorentzian(axis, &summed, 1, None)?;
    let averaged_fwhm = averaged_fit.get("fwhm").unwrap_or(f64::NAN);
    Ok(ScanStatistics { centers, jump_std, mean_single_fwhm, averaged_fwhm, averaged_fit })
}
