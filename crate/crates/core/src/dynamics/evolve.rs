use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{check_positive, Error, Result};

use super::liouvillian::{unvectorize, vectorize, Generator};
use super::model::{NVModel, N_LEVELS};
use super::state::{DensityMatrix, TRACE_TOL};
use super::Drive;

/// Step-size control of the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Number of uniformly spaced samples including both end points.
    pub n_samples: usize,
    /// Steps below this size (ns) abort with a stiffness error.
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, n_samples: 101, min_step: 1e-9, max_steps: 10_000_000 }
    }
}

/// Density matrices sampled on a uniform time grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub accepted_steps: usize,
    pub smallest_step: f64,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

struct Integrator<'a> {
    g: &'a Generator,
    opts: EvolveOptions,
    h: f64,
    steps: usize,
    smallest: f64,
    k: Vec<DMatrix<C64>>,
}

impl<'a> Integrator<'a> {
    fn new(g: &'a Generator, opts: EvolveOptions, span: f64) -> Self {
        let n = g.dim();
        Self {
            g,
            opts,
            h: (span / 100.0).min(0.01).max(opts.min_step),
            steps: 0,
            smallest: f64::INFINITY,
            k: vec![DMatrix::zeros(n, n); 7],
        }
    }

    /// Advances `y` from `t0` to `t1` exactly, adapting the step.
    fn advance(&mut self, y: &mut DMatrix<C64>, t0: f64, t1: f64) -> Result<()> {
        let mut t = t0;
        let n = self.g.dim();
        let mut stage = DMatrix::<C64>::zeros(n, n);
        while t1 - t > 1e-12 * t1.abs().max(1.0) {
            let last = self.h >= t1 - t;
            let h = if last { t1 - t } else { self.h };
            for s in 0..7 {
                stage.copy_from(y);
                for (j, &a) in A[s].iter().enumerate().take(s) {
                    if a != 0.0 {
                        stage.zip_apply(&self.k[j], |x, kj| *x += kj * (h * a));
                    }
                }
                self.g.rhs(t + C[s] * h, &stage, &mut self.k[s]);
            }
            let mut y5 = y.clone();
            let mut err_sq = 0.0;
            for i in 0..n * n {
                let mut d5 = C64::new(0.0, 0.0);
                let mut d4 = C64::new(0.0, 0.0);
                for s in 0..7 {
                    d5 += self.k[s][i] * B5[s];
                    d4 += self.k[s][i] * B4[s];
                }
                y5[i] += d5 * h;
                let scale = self.opts.atol + self.opts.rtol * y[i].norm().max(y5[i].norm());
                err_sq += ((d5 - d4) * h).norm_sqr() / (scale * scale);
            }
            let err = (err_sq / (n * n) as f64).sqrt();
            if err <= 1.0 {
                t = if last { t1 } else { t + h };
                *y = y5;
                self.steps += 1;
                self.smallest = self.smallest.min(h);
                let tr = y.trace().re;
                if (tr - 1.0).abs() > TRACE_TOL {
                    return Err(Error::TraceDrift((tr - 1.0).abs()));
                }
                let herm = (&*y + y.adjoint()) * C64::new(0.5 / tr, 0.0);
                *y = herm;
                if self.steps > self.opts.max_steps {
                    return Err(Error::Stiffness { time: t, step: self.smallest });
                }
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !last || err > 1.0 {
                self.h = h * factor;
            }
            if self.h < self.opts.min_step {
                return Err(Error::Stiffness { time: t, step: self.h });
            }
        }
        Ok(())
    }
}

/// Integrates a reduced-space state under `g`, returning it at every time in
/// `samples` (ascending, starting at or after `t0`).
pub fn integrate(
    g: &Generator,
    rho0: &DMatrix<C64>,
    t0: f64,
    samples: &[f64],
    opts: EvolveOptions,
) -> Result<(Vec<DMatrix<C64>>, usize, f64)> {
    let end = samples.last().copied().unwrap_or(t0);
    let mut stops: Vec<(f64, bool)> = samples.iter().map(|&t| (t, true)).collect();
    stops.extend(g.breakpoints().into_iter().filter(|&b| b > t0 && b < end).map(|b| (b, false)));
    stops.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut integ = Integrator::new(g, opts, end - t0);
    let mut y = rho0.clone();
    let mut t = t0;
    let mut out = Vec::with_capacity(samples.len());
    for (stop, record) in stops {
        if stop > t {
            integ.advance(&mut y, t, stop)?;
            t = stop;
        }
        if record {
            out.push(y.clone());
        }
    }
    Ok((out, integ.steps, integ.smallest))
}

fn support_of(rho: &DensityMatrix) -> [bool; N_LEVELS] {
    std::array::from_fn(|i| rho.matrix().row(i).iter().any(|c| c.norm() > 0.0))
}

/// Adaptive Dormand-Prince integration of the master equation from t = 0 to
/// `duration` (ns). Time-dependent envelopes are honored; their breakpoints
/// are hit exactly.
pub fn evolve(
    model: &NVModel,
    rho0: &DensityMatrix,
    duration: f64,
    drives: &[Drive],
    opts: EvolveOptions,
) -> Result<Trajectory> {
    check_positive("duration", duration)?;
    if opts.n_samples < 2 {
        return Err(Error::InvalidArgument("n_samples must be >= 2".into()));
    }
    let g = Generator::reduced(model, drives, 0.0, &support_of(rho0))?;
    let times: Vec<f64> = (0..opts.n_samples).map(|k| duration * k as f64 / (opts.n_samples - 1) as f64).collect();
    let (reduced, steps, smallest) = integrate(&g, &g.restrict(rho0), 0.0, &times, opts)?;
    let states = reduced.iter().map(|r| DensityMatrix::from_matrix_unchecked(g.embed(r))).collect();
    Ok(Trajectory { times, states, accepted_steps: steps, smallest_step: smallest })
}

/// exp(L t) applied to a reduced state, for a time-independent generator.
pub fn propagate_expm(g: &Generator, rho0: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let sup = g.superoperator_at(0.0) * C64::new(t, 0.0);
    unvectorize(&(sup.exp() * vectorize(rho0)), g.dim())
}

/// State at `t` and its time integral over [0, t] for a time-independent
/// generator, from one exponential of the augmented matrix [[L, v], [0, 0]].
pub fn propagate_with_integral(g: &Generator, rho0: &DMatrix<C64>, t: f64) -> (DMatrix<C64>, DMatrix<C64>) {
    let n2 = g.dim() * g.dim();
    let sup = g.superoperator_at(0.0);
    let v = vectorize(rho0);
    let mut aug = DMatrix::<C64>::zeros(n2 + 1, n2 + 1);
    aug.view_mut((0, 0), (n2, n2)).copy_from(&sup);
    aug.view_mut((0, n2), (n2, 1)).copy_from(&v);
    let e = (aug * C64::new(t, 0.0)).exp();
    let fin: DVector<C64> = e.view((0, 0), (n2, n2)) * &v;
    let integral = DVector::from_iterator(n2, e.view((0, n2), (n2, 1)).iter().copied());
    (unvectorize(&fin, g.dim()), unvectorize(&integral, g.dim()))
}

/// Matrix-exponential reference solution on the full model.
pub fn evolve_expm(model: &NVModel, rho0: &DensityMatrix, t: f64, drives: &[Drive]) -> Result<DensityMatrix> {
    let g = Generator::new(model, drives, 0.0)?;
    if !g.is_time_independent() {
        return Err(Error::InvalidArgument("matrix exponential needs constant envelopes".into()));
    }
    Ok(DensityMatrix::from_matrix_unchecked(propagate_expm(&g, rho0.matrix(), t)))
}
