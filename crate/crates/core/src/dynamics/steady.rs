use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

use super::liouvillian::{unvectorize, Generator};
use super::model::NVModel;
use super::state::DensityMatrix;
use super::Drive;

/// Relative singular-value threshold for the null space of the generator.
pub const NULLITY_RTOL: f64 = 1e-10;

/// Number of singular values of `m` below `NULLITY_RTOL` times the largest.
pub fn nullity(m: &DMatrix<C64>) -> usize {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s <= NULLITY_RTOL * max).count()
}

/// Stationary state of a time-independent reduced generator.
pub fn steady_state_of(g: &Generator, check_unique: bool) -> Result<DMatrix<C64>> {
    let n = g.dim();
    let mut sup = g.superoperator_at(0.0);
    if check_unique {
        let k = nullity(&sup);
        if k != 1 {
            return Err(Error::NonUniqueSteadyState(k));
        }
    }
    // Replace one balance equation with the trace condition.
    for c in 0..n * n {
        sup[(0, c)] = C64::new(0.0, 0.0);
    }
    for i in 0..n {
        sup[(0, i + n * i)] = C64::new(1.0, 0.0);
    }
    let mut rhs = DVector::<C64>::zeros(n * n);
    rhs[0] = C64::new(1.0, 0.0);
    let x = sup.lu().solve(&rhs).ok_or(Error::NonUniqueSteadyState(2))?;
    let m = unvectorize(&x, n);
    Ok((&m + m.adjoint()) * C64::new(0.5, 0.0))
}

/// Unique stationary state of the driven model. Envelopes are taken at full
/// amplitude.
pub fn steady_state(model: &NVModel, drives: &[Drive]) -> Result<DensityMatrix> {
    let constant: Vec<Drive> = drives.iter().map(|d| d.clone().with_envelope(super::Envelope::Constant)).collect();
    let g = Generator::new(model, &constant, 0.0)?;
    let rho = steady_state_of(&g, true)?;
    DensityMatrix::new(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::liouvillian::{liouvillian, vectorize};
    use crate::dynamics::model::{build_nv_model, Level, ModelRates};
    use crate::levels::ExcitedStateParams;

    #[test]
    fn undriven_model_is_not_unique() {
        let err = steady_state(&NVModel::default(), &[]).unwrap_err();
        assert!(matches!(err, Error::NonUniqueSteadyState(k) if k >= 3));
    }

    #[test]
    fn saturated_cycling_transition() {
        // g+-1 are disconnected; a weak spin repump makes the state unique
        let model = build_nv_model(
            ExcitedStateParams { delta_dprime: 0.0, ..Default::default() },
            Default::default(),
            &ModelRates { cross_leak_ey: 0.0, spin_repump_rate: 1e-3, ..Default::default() },
        )
        .unwrap();
        let drives = [Drive::optical(Level::G0, Level::Ey, 2000.0, 0.0)];
        let rho = steady_state(&model, &drives).unwrap();
        assert!((rho.population(Level::Ey) - 0.5).abs() < 1e-3);
        let l = liouvillian(&model, &drives, 0.0).unwrap();
        assert!((&l.matrix * vectorize(rho.matrix())).norm() < 1e-9);
    }

    #[test]
    fn weak_drive_scattering_is_quadratic() {
        let model = build_nv_model(
            ExcitedStateParams { delta_dprime: 0.0, ..Default::default() },
            Default::default(),
            &ModelRates { cross_leak_ey: 0.0, spin_repump_rate: 1e-3, ..Default::default() },
        )
        .unwrap();
        let pop = |omega: f64| {
            steady_state(&model, &[Drive::optical(Level::G0, Level::Ey, omega, 0.0)]).unwrap().population(Level::Ey)
        };
        let ratio = pop(0.2) / pop(0.1);
        // saturation corrects the ratio at order (omega/gamma)^2
        assert!((ratio - 4.0).abs() < 4e-3, "{ratio}");
    }
}
