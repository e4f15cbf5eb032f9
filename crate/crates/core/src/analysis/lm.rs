//! Damped Gauss-Newton (Levenberg-Marquardt) least squares.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub max_iter: usize,
    /// Converged when an accepted step lowers the squared residual norm by
    /// less than this fraction.
    pub ftol: f64,
    pub lambda0: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self { max_iter: 200, ftol: 1e-10, lambda0: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Parameter covariance scaled by the residual variance.
    pub covariance: DMatrix<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub n_iter: usize,
}

impl LmOutcome {
    pub fn std_err(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Central-difference Jacobian of `f` at `p`.
fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: &F, p: &[f64], m: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(m, p.len());
    let mut q = p.to_vec();
    for k in 0..p.len() {
        let h = 1e-6 * p[k].abs().max(1e-3);
        q[k] = p[k] + h;
        let up = f(&q);
        q[k] = p[k] - h;
        let down = f(&q);
        q[k] = p[k];
        for i in 0..m {
            j[(i, k)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    j
}

/// Minimizes the squared norm of `residuals(p)` starting from `p0`.
pub fn levenberg_marquardt<F>(residuals: F, p0: &[f64], cfg: LmConfig) -> LmOutcome
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut r = residuals(&p);
    let m = r.len();
    let mut cost = sum_sq(&r);
    let mut lambda = cfg.lambda0;
    let mut converged = false;
    let mut iter = 0;
    let mut jac = jacobian(&residuals, &p, m);
    while iter < cfg.max_iter {
        iter += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * DVector::from_column_slice(&r);
        let dmax = jtj.diagonal().max();
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12 * dmax.max(1e-300));
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&grad))) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
            let rt = residuals(&trial);
            let ct = sum_sq(&rt);
            if ct.is_finite() && ct < cost {
                let rel = (cost - ct) / cost;
                let tiny_step = step.norm() <= 1e-14 * (DVector::from_column_slice(&p).norm() + 1e-14);
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < cfg.ftol || tiny_step {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: p is a minimum to working precision
            converged = true;
            break;
        }
        jac = jacobian(&residuals, &p, m);
        if converged {
            break;
        }
    }
    let jtj = jac.transpose() * &jac;
    let dof = (m.saturating_sub(n)).max(1) as f64;
    let s2 = cost / dof;
    let covariance = jtj
        .clone()
        .try_inverse()
        .or_else(|| jtj.pseudo_inverse(1e-14).ok())
        .map(|inv| inv * s2)
        .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
    LmOutcome { params: p, covariance, residual_norm: cost.sqrt(), converged, n_iter: iter }
}
