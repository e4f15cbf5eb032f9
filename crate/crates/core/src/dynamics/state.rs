use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

use super::model::{Level, N_LEVELS};

pub const HERMITIAN_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-7;
pub const POSITIVITY_TOL: f64 = 1e-7;

/// Ten-level density matrix in [`Level`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(DMatrix<C64>);

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != N_LEVELS || m.ncols() != N_LEVELS {
            return Err(Error::ContractViolation(format!(
                "density matrix must be {N_LEVELS}x{N_LEVELS}, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let rho = Self(m);
        let herm = (rho.0.clone() - rho.0.adjoint()).norm();
        if herm > HERMITIAN_TOL {
            return Err(Error::ContractViolation(format!("density matrix not Hermitian ({herm:e})")));
        }
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::ContractViolation(format!("density matrix trace {tr} != 1")));
        }
        let min = rho.min_eigenvalue();
        if min < -POSITIVITY_TOL {
            return Err(Error::ContractViolation(format!("density matrix eigenvalue {min:e} < 0")));
        }
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(m: DMatrix<C64>) -> Self {
        Self(m)
    }

    pub fn pure(level: Level) -> Self {
        Self::mixture(&[(level, 1.0)])
    }

    /// Diagonal state with the given (level, weight) pairs, normalized.
    pub fn mixture(weights: &[(Level, f64)]) -> Self {
        let mut m = DMatrix::zeros(N_LEVELS, N_LEVELS);
        let total: f64 = weights.iter().map(|w| w.1).sum();
        for &(l, w) in weights {
            m[(l.index(), l.index())] += C64::new(w / total, 0.0);
        }
        Self(m)
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn population(&self, level: Level) -> f64 {
        self.0[(level.index(), level.index())].re
    }

    pub fn populations(&self) -> [f64; N_LEVELS] {
        std::array::from_fn(|i| self.0[(i, i)].re)
    }

    pub fn excited_population(&self) -> f64 {
        Level::ALL.iter().filter(|l| l.is_excited()).map(|&l| self.population(l)).sum()
    }

    pub fn ground_population(&self) -> f64 {
        Level::GROUND.iter().map(|&l| self.population(l)).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(h).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Half the trace norm of the difference.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        trace_distance(&self.0, &other.0)
    }
}

pub fn trace_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let d = a - b;
    let h = (&d + d.adjoint()) * C64::new(0.5, 0.0);
    0.5 * SymmetricEigen::new(h).eigenvalues.iter().map(|x| x.abs()).sum::<f64>()
}
