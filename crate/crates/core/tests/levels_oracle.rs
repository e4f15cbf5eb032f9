use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use nvsim_core::levels::{
    build_excited_hamiltonian, eigensystem, ground_levels, transition_map, ExcitedBasis, ExcitedStateParams,
    GroundParams, TransitionKind,
};

fn dense(p: &ExcitedStateParams) -> DMatrix<C64> {
    let h = build_excited_hamiltonian(p).unwrap();
    DMatrix::from_fn(6, 6, |i, j| h.matrix()[(i, j)])
}

/// Coefficients c_0..c_6 of det(x I - A), c_6 = 1, by Faddeev-LeVerrier.
fn char_poly(a: &DMatrix<C64>) -> Vec<C64> {
    let n = a.nrows();
    let mut c = vec![C64::new(0.0, 0.0); n + 1];
    c[n] = C64::new(1.0, 0.0);
    let mut m = DMatrix::<C64>::zeros(n, n);
    let id = DMatrix::<C64>::identity(n, n);
    for k in 1..=n {
        m = a * &m + &id * c[n - k + 1];
        c[n - k] = -(a * &m).trace() / k as f64;
    }
    c
}

fn horner(c: &[C64], x: C64) -> C64 {
    c.iter().rev().fold(C64::new(0.0, 0.0), |acc, &k| acc * x + k)
}

/// All roots of a monic polynomial by Durand-Kerner iteration.
fn durand_kerner(c: &[C64], scale: f64) -> Vec<C64> {
    let n = c.len() - 1;
    let seed = C64::new(0.4, 0.9);
    let mut z: Vec<C64> = (0..n).map(|k| seed.powu(k as u32) * scale).collect();
    for _ in 0..20_000 {
        let mut delta: f64 = 0.0;
        for i in 0..n {
            let mut den = C64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    den *= z[i] - z[j];
                }
            }
            let step = horner(c, z[i]) / den;
            z[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-13 * scale {
            break;
        }
    }
    z
}

/// Projector onto the eigenspace of `a` near `energy`, of dimension `dim`,
/// by inverse iteration from independent starting vectors.
fn eigen_projector(a: &DMatrix<C64>, energy: f64, dim: usize) -> DMatrix<C64> {
    let n = a.nrows();
    let shifted = a - DMatrix::<C64>::identity(n, n) * C64::new(energy + 1e-7, 0.0);
    let lu = shifted.lu();
    let mut basis: Vec<DVector<C64>> = Vec::new();
    for s in 0..dim {
        let mut v = DVector::from_fn(n, |i, _| C64::new(1.0 + (i * (s + 2)) as f64 % 3.0, (i + s) as f64 * 0.37));
        for _ in 0..4 {
            v = lu.solve(&v).expect("shifted matrix is invertible");
            v /= C64::new(v.norm(), 0.0);
        }
        for b in &basis {
            let proj = b.dotc(&v);
            v -= b * proj;
        }
        v /= C64::new(v.norm(), 0.0);
        basis.push(v);
    }
    basis.iter().fold(DMatrix::zeros(n, n), |acc, b| acc + b * b.adjoint())
}

fn strained(d1: f64, d2: f64) -> ExcitedStateParams {
    ExcitedStateParams::default().with_strain(d1, d2)
}

fn check_against_oracle(p: &ExcitedStateParams, root_tol: f64) {
    let a = dense(p);
    let levels = eigensystem(&build_excited_hamiltonian(p).unwrap()).unwrap();
    let scale = a.norm();

    let c = char_poly(&a);
    let mut from_eigs = vec![C64::new(1.0, 0.0)];
    for &e in &levels.energies {
        let mut next = vec![C64::new(0.0, 0.0); from_eigs.len() + 1];
        for (k, &v) in from_eigs.iter().enumerate() {
            next[k + 1] += v;
            next[k] -= v * e;
        }
        from_eigs = next;
    }
    for k in 0..=6 {
        let tol = 1e-11 * scale.powi(6 - k as i32).max(1.0);
        assert!((c[k] - from_eigs[k]).norm() <= tol, "coefficient {k}: {} vs {}", c[k], from_eigs[k]);
    }

    let mut roots: Vec<f64> = durand_kerner(&c, scale).iter().map(|z| z.re).collect();
    roots.sort_by(f64::total_cmp);
    for (r, e) in roots.iter().zip(&levels.energies) {
        assert!((r - e).abs() <= root_tol, "root {r} vs eigenvalue {e}");
    }

    let mut i = 0;
    while i < 6 {
        let mut j = i + 1;
        while j < 6 && (levels.energies[j] - levels.energies[i]).abs() < 1e-6 {
            j += 1;
        }
        let proj = eigen_projector(&a, levels.energies[i], j - i);
        for b in 0..6 {
            let oracle = proj[(b, b)].re;
            let ours: f64 = (i..j).map(|k| levels.characters[k][b]).sum();
            assert!((oracle - ours).abs() < 1e-8, "levels {i}..{j}, basis {b}: {oracle} vs {ours}");
        }
        i = j;
    }
}

#[test]
fn default_spectrum_matches_characteristic_polynomial() {
    // Double roots converge only linearly under Durand-Kerner.
    check_against_oracle(&ExcitedStateParams::default(), 1e-3);
}

#[test]
fn strained_spectra_match_characteristic_polynomial() {
    for (d1, d2) in [(0.0, 500.0), (300.0, 1200.0), (-800.0, 2000.0), (50.0, 9000.0)] {
        check_against_oracle(&strained(d1, d2), 1e-6);
    }
}

#[test]
fn default_energies() {
    let levels = eigensystem(&build_excited_hamiltonian(&ExcitedStateParams::default()).unwrap()).unwrap();
    let e = |b: ExcitedBasis| levels.energies[levels.index_of(b)];
    assert!((e(ExcitedBasis::A2) - e(ExcitedBasis::A1) - 3100.0).abs() < 1e-9);
    // A1 is uncoupled at zero strain: its energy is its diagonal element.
    let h = build_excited_hamiltonian(&ExcitedStateParams::default()).unwrap();
    assert!((e(ExcitedBasis::A1) - h.get(ExcitedBasis::A1, ExcitedBasis::A1).re).abs() < 1e-9);
    assert_eq!(levels.index_of(ExcitedBasis::A2), 5);
}

#[test]
fn transition_offsets_follow_levels() {
    let p = strained(0.0, 1500.0);
    let g = GroundParams { b_field: 20.0, ..GroundParams::default() };
    let lines = transition_map(&p, &g).unwrap();
    let levels = eigensystem(&build_excited_hamiltonian(&p).unwrap()).unwrap();
    let ground = ground_levels(&g);
    assert_eq!(lines.len(), 18);
    for l in &lines {
        let spin = nvsim_core::levels::GroundSpin::from_ms(l.ground_spin).unwrap();
        assert!((l.offset - (levels.energies[l.excited_index] - ground.energy(spin))).abs() < 1e-9);
    }
    let direct = lines.iter().filter(|l| l.kind == TransitionKind::Direct).count();
    assert!(direct > 0 && direct < 18);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamiltonian_is_hermitian_with_fixed_trace(d1 in -5e3f64..5e3, d2 in -5e3f64..5e3) {
        let p = strained(d1, d2);
        let a = dense(&p);
        prop_assert!((&a - a.adjoint()).norm() < 1e-9);
        let levels = eigensystem(&build_excited_hamiltonian(&p).unwrap()).unwrap();
        let sum: f64 = levels.energies.iter().sum();
        prop_assert!((sum - a.trace().re).abs() < 1e-7);
        prop_assert!(levels.energies.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn characters_are_doubly_stochastic(d1 in -5e3f64..5e3, d2 in -5e3f64..5e3) {
        let levels = eigensystem(&build_excited_hamiltonian(&strained(d1, d2)).unwrap()).unwrap();
        for i in 0..6 {
            let row: f64 = levels.characters[i].iter().sum();
            let col: f64 = (0..6).map(|k| levels.characters[k][i]).sum();
            prop_assert!((row - 1.0).abs() < 1e-10 && (col - 1.0).abs() < 1e-10);
            prop_assert!(levels.characters[i].iter().all(|&c| (-1e-12..=1.0 + 1e-12).contains(&c)));
        }
    }
}
