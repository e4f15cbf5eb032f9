use proptest::prelude::*;

use nvsim_core::dynamics::{
    build_nv_model, evolve, liouvillian, steady_state, steady_state_of, DensityMatrix, Drive, EvolveOptions, Generator,
    Level, ModelRates, NVModel, N_LEVELS, RAD_PER_NS_PER_MHZ,
};
use nvsim_core::levels::{ExcitedBasis, ExcitedStateParams, GroundParams};

/// Ey is an exact eigenstate and decays only back to g0.
fn two_level_model(lifetime: f64) -> NVModel {
    let excited = ExcitedStateParams { delta_dprime: 0.0, ..ExcitedStateParams::default() };
    let rates = ModelRates { excited_lifetime: lifetime, cross_leak_ey: 0.0, ..ModelRates::default() };
    build_nv_model(excited, GroundParams::default(), &rates).unwrap()
}

/// Steady excited population of a driven two-level atom (all rates in rad/ns).
fn closed_form_steady(omega: f64, delta: f64, gamma: f64) -> f64 {
    0.25 * omega * omega / (delta * delta + 0.5 * omega * omega + 0.25 * gamma * gamma)
}

/// Torrey's resonant solution from the ground state, valid for omega > gamma / 4.
fn torrey(omega: f64, gamma: f64, t: f64) -> f64 {
    let lambda = (omega * omega - gamma * gamma / 16.0).sqrt();
    let a = 0.75 * gamma;
    omega * omega / (2.0 * omega * omega + gamma * gamma)
        * (1.0 - (-a * t).exp() * ((lambda * t).cos() + a / lambda * (lambda * t).sin()))
}

#[test]
fn model_reduces_to_two_levels() {
    let m = two_level_model(12.0);
    let levels = m.level_set();
    assert!(levels.characters[m.eigen_index(ExcitedBasis::Ey)][ExcitedBasis::Ey.index()] > 1.0 - 1e-12);
}

#[test]
fn steady_state_matches_closed_form() {
    let tau = 12.0;
    let m = two_level_model(tau);
    let mut support = [false; N_LEVELS];
    support[Level::G0.index()] = true;
    for (rabi, det) in [(5.0, 0.0), (20.0, 0.0), (20.0, 15.0), (60.0, -40.0), (2.0, 7.0)] {
        let g = Generator::reduced(&m, &[Drive::optical(Level::G0, Level::Ey, rabi, det)], 0.0, &support).unwrap();
        assert_eq!(g.dim(), 2);
        let ss = g.embed(&steady_state_of(&g, true).unwrap());
        let want = closed_form_steady(rabi * RAD_PER_NS_PER_MHZ, det * RAD_PER_NS_PER_MHZ, 1.0 / tau);
        let got = ss[(Level::Ey.index(), Level::Ey.index())].re;
        assert!((got - want).abs() < 1e-9, "rabi {rabi} det {det}: {got} vs {want}");
    }
}

#[test]
fn damped_rabi_matches_torrey() {
    let tau = 12.0;
    let m = two_level_model(tau);
    let rabi = 80.0;
    let opts = EvolveOptions { n_samples: 201, rtol: 1e-10, atol: 1e-12, ..EvolveOptions::default() };
    let traj =
        evolve(&m, &DensityMatrix::pure(Level::G0), 60.0, &[Drive::optical(Level::G0, Level::Ey, rabi, 0.0)], opts)
            .unwrap();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let want = torrey(rabi * RAD_PER_NS_PER_MHZ, 1.0 / tau, *t);
        assert!((s.population(Level::Ey) - want).abs() < 1e-7, "t {t}");
    }
}

#[test]
fn undamped_flop_period() {
    let m = two_level_model(1e12);
    let rabi = 50.0;
    let opts = EvolveOptions { n_samples: 81, rtol: 1e-10, atol: 1e-12, ..EvolveOptions::default() };
    let traj =
        evolve(&m, &DensityMatrix::pure(Level::G0), 40.0, &[Drive::optical(Level::G0, Level::Ey, rabi, 0.0)], opts)
            .unwrap();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let want = (0.5 * rabi * RAD_PER_NS_PER_MHZ * t).sin().powi(2);
        assert!((s.population(Level::Ey) - want).abs() < 1e-7, "t {t}");
    }
}

#[test]
fn steady_state_is_annihilated_by_the_generator() {
    let m = NVModel::default();
    let drives = [
        Drive::optical(Level::G0, Level::Ey, 10.0, 3.0),
        Drive::optical(Level::GPlus, Level::A2, 4.0, 0.0),
        Drive::optical(Level::GMinus, Level::A2, 4.0, 0.0),
    ];
    let ss = steady_state(&m, &drives).unwrap();
    let l = liouvillian(&m, &drives, 0.0).unwrap();
    assert!(l.apply(&ss).norm() < 1e-10);
    assert!((ss.trace() - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn evolution_stays_physical(
        rabi in 0.0f64..80.0,
        det in -50.0f64..50.0,
        mw in 0.0f64..10.0,
        p0 in 0.0f64..1.0,
    ) {
        let m = NVModel::default();
        let drives = [Drive::optical(Level::G0, Level::Ex, rabi, det), Drive::microwave(Level::GPlus, mw, 0.0)];
        let rho0 = DensityMatrix::mixture(&[(Level::G0, p0), (Level::GPlus, 1.0 - p0), (Level::S, 0.0)]);
        let opts = EvolveOptions { n_samples: 11, ..EvolveOptions::default() };
        let traj = evolve(&m, &rho0, 30.0, &drives, opts).unwrap();
        for s in &traj.states {
            prop_assert!((s.trace() - 1.0).abs() < 1e-9);
            prop_assert!(s.min_eigenvalue() > -1e-7);
            let mat = s.matrix();
            prop_assert!((mat - mat.adjoint()).norm() < 1e-10);
        }
    }
}
