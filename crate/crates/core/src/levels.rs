//! Excited-state level structure of the negatively charged NV center.
//!
//! The six orbital-spin states of the `ae` configuration are coupled by the
//! axial spin-orbit interaction, the spin-spin interaction and crystal strain.
//! Everything here works in linear MHz measured from the zero-phonon line.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix6, SymmetricEigen, Vector6};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_positive, Error, Result};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Spin-orbit, spin-spin and strain parameters of the excited-state Hamiltonian (MHz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitedStateParams {
    pub lambda_z: f64,
    pub delta: f64,
    pub delta_prime: f64,
    pub delta_dprime: f64,
    pub strain_d1: f64,
    pub strain_d2: f64,
}

impl Default for ExcitedStateParams {
    fn default() -> Self {
        Self {
            // (A1,A2) and (E1,E2) centroids sit 2 lambda_z apart.
            lambda_z: 2750.0,
            delta: 1420.0 / 3.0,
            delta_prime: 1550.0,
            delta_dprime: 200.0,
            strain_d1: 0.0,
            strain_d2: 0.0,
        }
    }
}

impl ExcitedStateParams {
    pub fn with_strain(mut self, d1: f64, d2: f64) -> Self {
        self.strain_d1 = d1;
        self.strain_d2 = d2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("lambda_z", self.lambda_z)?;
        check_finite("delta", self.delta)?;
        check_finite("delta_prime", self.delta_prime)?;
        check_finite("delta_dprime", self.delta_dprime)?;
        check_finite("strain_d1", self.strain_d1)?;
        check_finite("strain_d2", self.strain_d2)
    }
}

/// Basis of the excited-state manifold. The discriminant is the matrix index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExcitedBasis {
    A1 = 0,
    A2 = 1,
    Ex = 2,
    Ey = 3,
    E1 = 4,
    E2 = 5,
}

impl ExcitedBasis {
    pub const ALL: [ExcitedBasis; 6] = [Self::A1, Self::A2, Self::Ex, Self::Ey, Self::E1, Self::E2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::A1 => "A1",
            Self::A2 => "A2",
            Self::Ex => "Ex",
            Self::Ey => "Ey",
            Self::E1 => "E1",
            Self::E2 => "E2",
        }
    }
}

impl fmt::Display for ExcitedBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ExcitedBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|b| b.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown basis label `{s}`")))
    }
}

/// A 6x6 Hermitian matrix in [`ExcitedBasis`] order (MHz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermitianMatrix6(Matrix6<C64>);

impl HermitianMatrix6 {
    /// Wraps `m` after checking Hermiticity to 1e-9 relative tolerance.
    pub fn new(m: Matrix6<C64>) -> Result<Self> {
        let scale = m.norm().max(1.0);
        let dev = (m - m.adjoint()).norm();
        if dev > 1e-9 * scale {
            return Err(Error::ContractViolation(format!("matrix is not Hermitian: |H - H^+| = {dev:e}")));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix6<C64> {
        &self.0
    }

    pub fn get(&self, row: ExcitedBasis, col: ExcitedBasis) -> C64 {
        self.0[(row.index(), col.index())]
    }
}

/// Builds the excited-state Hamiltonian H_ss + H_so + H_strain.
pub fn build_excited_hamiltonian(p: &ExcitedStateParams) -> Result<HermitianMatrix6> {
    p.validate()?;
    let (lz, d, dp, dpp, d1, d2) = (p.lambda_z, p.delta, p.delta_prime, p.delta_dprime, p.strain_d1, p.strain_d2);
    let r = |x: f64| C64::new(x, 0.0);
    let i = |x: f64| C64::new(0.0, x);
    let z = C64::new(0.0, 0.0);
    #[rustfmt::skip]
    let m = Matrix6::new(
        r(d - dp + lz), z,             z,              z,             r(d1),       i(-d2),
        z,              r(d + dp + lz), z,             z,             i(d2),       r(-d1),
        z,              z,             r(-2.0 * d + d1), r(d2),       z,           i(dpp),
        z,              z,             r(d2),          r(-2.0 * d - d1), r(dpp),    z,
        r(d1),          i(-d2),        z,              r(dpp),        r(d - lz),   z,
        i(d2),          r(-d1),        i(-dpp),        z,             z,           r(d - lz),
    );
    Ok(HermitianMatrix6(m))
}

/// Eigen-decomposition of the excited manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    /// Ascending energies (MHz).
    pub energies: [f64; 6],
    /// Eigenvectors as columns, in the order of `energies`.
    pub states: Matrix6<C64>,
    /// `characters[i][b]` = |<b|psi_i>|^2.
    pub characters: [[f64; 6]; 6],
}

impl LevelSet {
    pub fn state(&self, i: usize) -> Vector6<C64> {
        self.states.column(i).into_owned()
    }

    /// Basis state with the largest overlap on eigenstate `i`.
    pub fn dominant(&self, i: usize) -> ExcitedBasis {
        let row = &self.characters[i];
        let k = (0..6).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(0);
        ExcitedBasis::ALL[k]
    }

    /// Index of the eigenstate with the largest overlap on basis state `b`.
    pub fn index_of(&self, b: ExcitedBasis) -> usize {
        (0..6).max_by(|&x, &y| self.characters[x][b.index()].total_cmp(&self.characters[y][b.index()])).unwrap_or(0)
    }
}

// Preference used to split degenerate eigenspaces: A2 first, then Ex.
const TIE_WEIGHTS: [f64; 6] = [4.0, 1000.0, 100.0, 3.0, 2.0, 1.0];

/// Diagonalizes `h`, sorting ascending and resolving degeneracies
/// deterministically by descending A2 character, then descending Ex character.
pub fn eigensystem(h: &HermitianMatrix6) -> Result<LevelSet> {
    let m = HermitianMatrix6::new(h.0)?.0;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut energies = [0.0; 6];
    let mut states = Matrix6::<C64>::zeros();
    for (k, &j) in order.iter().enumerate() {
        energies[k] = eig.eigenvalues[j];
        states.set_column(k, &eig.eigenvectors.column(j));
    }

    let tol = 1e-7 * (1.0 + m.norm());
    let mut start = 0;
    while start < 6 {
        let mut end = start + 1;
        while end < 6 && energies[end] - energies[end - 1] <= tol {
            end += 1;
        }
        if end - start > 1 {
            split_degenerate(&mut energies, &mut states, start, end);
        }
        start = end;
    }

    for k in 0..6 {
        fix_phase(&mut states, k);
    }
    let mut characters = [[0.0; 6]; 6];
    for (k, row) in characters.iter_mut().enumerate() {
        let norm: f64 = states.column(k).iter().map(|c| c.norm_sqr()).sum();
        for (b, ch) in row.iter_mut().enumerate() {
            *ch = states[(b, k)].norm_sqr() / norm;
        }
    }
    Ok(LevelSet { energies, states, characters })
}

fn split_degenerate(energies: &mut [f64; 6], states: &mut Matrix6<C64>, start: usize, end: usize) {
    let k = end - start;
    let sub = states.columns(start, k).into_owned();
    let weights = Matrix6::<C64>::from_diagonal(&Vector6::from_iterator(TIE_WEIGHTS.iter().map(|&w| C64::new(w, 0.0))));
    let proj = sub.adjoint() * weights * &sub;
    let inner = SymmetricEigen::new(proj);
    let rotated = &sub * &inner.eigenvectors;
    let mut cols: Vec<Vector6<C64>> = (0..k).map(|c| rotated.column(c).into_owned()).collect();
    let key = |v: &Vector6<C64>| (v[ExcitedBasis::A2.index()].norm_sqr(), v[ExcitedBasis::Ex.index()].norm_sqr());
    cols.sort_by(|a, b| {
        let (a2a, exa) = key(a);
        let (a2b, exb) = key(b);
        a2b.total_cmp(&a2a).then(exb.total_cmp(&exa))
    });
    let mean = energies[start..end].iter().sum::<f64>() / k as f64;
    for (c, v) in cols.iter().enumerate() {
        states.set_column(start + c, v);
        energies[start + c] = mean;
    }
}

fn fix_phase(states: &mut Matrix6<C64>, k: usize) {
    let col = states.column(k);
    let mut best = 0;
    for b in 1..6 {
        // strict comparison with a small margin keeps the choice stable
        if col[b].norm() > col[best].norm() + 1e-12 {
            best = b;
        }
    }
    let pivot = col[best];
    if pivot.norm() == 0.0 {
        return;
    }
    let phase = pivot.conj() / pivot.norm();
    let norm: f64 = col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for b in 0..6 {
        states[(b, k)] = states[(b, k)] * phase / norm;
    }
}

/// |<basis|psi_i>|^2 for every eigenstate, looked up by basis label.
pub fn state_character(levels: &LevelSet, basis_label: &str) -> Result<[f64; 6]> {
    let b: ExcitedBasis = basis_label.parse()?;
    let mut out = [0.0; 6];
    for (i, o) in out.iter_mut().enumerate() {
        *o = levels.characters[i][b.index()];
    }
    Ok(out)
}

/// Ground-state spin projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroundSpin {
    Zero,
    Plus,
    Minus,
}

impl GroundSpin {
    pub const ALL: [GroundSpin; 3] = [Self::Zero, Self::Plus, Self::Minus];

    pub fn ms(self) -> i8 {
        match self {
            Self::Zero => 0,
            Self::Plus => 1,
            Self::Minus => -1,
        }
    }

    pub fn from_ms(ms: i8) -> Option<Self> {
        match ms {
            0 => Some(Self::Zero),
            1 => Some(Self::Plus),
            -1 => Some(Self::Minus),
            _ => None,
        }
    }
}

/// Polarization of the photon emitted on `excited -> ground`, as components
/// on the normalized circular basis (sigma+, sigma-).
///
/// Follows the selection-rule table: the ms = -1 ground state couples to A1/A2
/// with sigma+ and to E1/E2 with sigma-; ms = +1 the other way round; ms = 0
/// couples to Ex with y and to Ey with x. Signs come from the spin-orbit
/// composition of each excited state, so summed emission is strain invariant.
pub fn emission_amplitude(ground: GroundSpin, excited: ExcitedBasis) -> [C64; 2] {
    use ExcitedBasis::*;
    let h = FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    let r = |x: f64| C64::new(x, 0.0);
    match (ground, excited) {
        (GroundSpin::Plus, A1) | (GroundSpin::Plus, A2) => [z, r(h)],
        (GroundSpin::Plus, E1) => [r(-h), z],
        (GroundSpin::Plus, E2) => [r(h), z],
        (GroundSpin::Minus, A1) => [r(-h), z],
        (GroundSpin::Minus, A2) => [r(h), z],
        (GroundSpin::Minus, E1) | (GroundSpin::Minus, E2) => [z, r(h)],
        // x = (s+ + s-)/sqrt2, y = i(s- - s+)/sqrt2
        (GroundSpin::Zero, Ey) => [r(h), r(h)],
        (GroundSpin::Zero, Ex) => [C64::new(0.0, -h), C64::new(0.0, h)],
        _ => [z, z],
    }
}

/// Optical transition dipole between a ground spin state and an excited eigenstate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionDipole {
    pub ground_spin: i8,
    pub excited_index: usize,
    pub sigma_plus: C64,
    pub sigma_minus: C64,
    /// 0 for circular, 1 for linear polarization.
    pub ellipticity: f64,
}

impl TransitionDipole {
    /// Components on the linear (x, y) basis.
    pub fn linear(&self) -> (C64, C64) {
        let h = FRAC_1_SQRT_2;
        let x = (self.sigma_plus + self.sigma_minus) * h;
        let y = (self.sigma_plus - self.sigma_minus) * C64::new(0.0, h);
        (x, y)
    }

    pub fn strength(&self) -> f64 {
        self.sigma_plus.norm_sqr() + self.sigma_minus.norm_sqr()
    }
}

fn ellipticity(sp: C64, sm: C64) -> f64 {
    let (a, b) = (sp.norm(), sm.norm());
    let hi = a.max(b);
    if hi < 1e-15 {
        0.0
    } else {
        a.min(b) / hi
    }
}

/// Transition dipoles for every (ground spin, eigenstate) pair, ground spins
/// in the order -1, 0, +1.
pub fn transition_dipoles(levels: &LevelSet) -> Vec<TransitionDipole> {
    let mut out = Vec::with_capacity(18);
    for ms in [-1i8, 0, 1] {
        let g = GroundSpin::from_ms(ms).expect("valid spin");
        for i in 0..6 {
            let mut amp = [C64::new(0.0, 0.0); 2];
            for b in ExcitedBasis::ALL {
                let c = levels.states[(b.index(), i)];
                let e = emission_amplitude(g, b);
                amp[0] += c * e[0];
                amp[1] += c * e[1];
            }
            out.push(TransitionDipole {
                ground_spin: ms,
                excited_index: i,
                sigma_plus: amp[0],
                sigma_minus: amp[1],
                ellipticity: ellipticity(amp[0], amp[1]),
            });
        }
    }
    out
}

/// Ground-state triplet parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundParams {
    /// Zero-field splitting (MHz).
    pub d_gs: f64,
    /// Axial gyromagnetic factor (MHz/G).
    pub zeeman_per_gauss: f64,
    /// Axial magnetic field (G).
    pub b_field: f64,
}

impl Default for GroundParams {
    fn default() -> Self {
        Self { d_gs: 2880.0, zeeman_per_gauss: 2.8, b_field: 0.0 }
    }
}

impl GroundParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("d_gs", self.d_gs)?;
        check_finite("zeeman_per_gauss", self.zeeman_per_gauss)?;
        check_finite("b_field", self.b_field)
    }

    /// Zeeman shift of the ms = +1 level (MHz).
    pub fn zeeman_shift(&self) -> f64 {
        self.zeeman_per_gauss * self.b_field
    }
}

/// Ground-state energies (MHz) of ms = 0, -1, +1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundLevels {
    pub zero: f64,
    pub minus: f64,
    pub plus: f64,
}

impl GroundLevels {
    pub fn energy(&self, s: GroundSpin) -> f64 {
        match s {
            GroundSpin::Zero => self.zero,
            GroundSpin::Plus => self.plus,
            GroundSpin::Minus => self.minus,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.zero, self.minus, self.plus]
    }
}

pub fn ground_levels(g: &GroundParams) -> GroundLevels {
    let z = g.zeeman_shift();
    GroundLevels { zero: 0.0, minus: g.d_gs - z, plus: g.d_gs + z }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitionKind {
    Direct,
    Cross,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionLine {
    pub ground_spin: i8,
    pub excited_index: usize,
    /// Zero-strain identity of the excited eigenstate.
    pub excited_label: ExcitedBasis,
    /// Optical frequency offset from the ZPL (MHz).
    pub offset: f64,
    pub kind: TransitionKind,
}

/// All 18 ground-to-excited optical frequencies. A pair is direct when the
/// selection rules allow it for the eigenstate's dominant basis state.
pub fn transition_map(params: &ExcitedStateParams, g: &GroundParams) -> Result<Vec<TransitionLine>> {
    g.validate()?;
    let levels = eigensystem(&build_excited_hamiltonian(params)?)?;
    let ground = ground_levels(g);
    let mut out = Vec::with_capacity(18);
    for ms in [-1i8, 0, 1] {
        let s = GroundSpin::from_ms(ms).expect("valid spin");
        for i in 0..6 {
            let label = levels.dominant(i);
            let amp = emission_amplitude(s, label);
            let kind = if amp[0].norm() + amp[1].norm() > 0.0 { TransitionKind::Direct } else { TransitionKind::Cross };
            out.push(TransitionLine {
                ground_spin: ms,
                excited_index: i,
                excited_label: label,
                offset: levels.energies[i] - ground.energy(s),
                kind,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unstrained(dpp: f64) -> ExcitedStateParams {
        ExcitedStateParams { delta_dprime: dpp, ..Default::default() }
    }

    #[test]
    fn zero_perturbation_is_diagonal() {
        let p = unstrained(0.0);
        let h = build_excited_hamiltonian(&p).unwrap();
        let (d, dp, lz) = (p.delta, p.delta_prime, p.lambda_z);
        let expected = [d - dp + lz, d + dp + lz, -2.0 * d, -2.0 * d, d - lz, d - lz];
        for (i, &e) in expected.iter().enumerate() {
            for j in 0..6 {
                let want = if i == j { e } else { 0.0 };
                assert!((h.matrix()[(i, j)] - C64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn strain_entries() {
        let p = ExcitedStateParams::default().with_strain(1000.0, 0.0);
        let h = build_excited_hamiltonian(&p).unwrap();
        use ExcitedBasis::*;
        assert_eq!(h.get(A1, E1), C64::new(1000.0, 0.0));
        assert!((h.get(Ex, Ex).re - (-2.0 * p.delta + 1000.0)).abs() < 1e-9);
        assert_eq!(h.get(A2, E2), C64::new(-1000.0, 0.0));
    }

    #[test]
    fn non_finite_parameter_rejected() {
        let p = ExcitedStateParams { delta: f64::NAN, ..Default::default() };
        assert!(matches!(build_excited_hamiltonian(&p), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn non_hermitian_input_rejected() {
        let mut m = *build_excited_hamiltonian(&ExcitedStateParams::default()).unwrap().matrix();
        m[(0, 5)] = C64::new(3.0, 1.0);
        assert!(matches!(HermitianMatrix6::new(m), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn zero_strain_gaps() {
        let p = unstrained(0.0);
        let lv = eigensystem(&build_excited_hamiltonian(&p).unwrap()).unwrap();
        let e = |b: ExcitedBasis| lv.energies[lv.index_of(b)];
        use ExcitedBasis::*;
        assert!((e(A2) - e(A1) - 3100.0).abs() < 1e-6);
        let centroid = (e(A1) + e(A2)) / 2.0 - (e(E1) + e(E2)) / 2.0;
        assert!((centroid - 5500.0).abs() < 1e-6);
        assert!((e(Ex) + 2.0 * p.delta).abs() < 1e-9);
        // top state is pure A2
        assert!((lv.characters[5][A2.index()] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_states_resolve_to_basis_states() {
        let lv = eigensystem(&build_excited_hamiltonian(&unstrained(0.0)).unwrap()).unwrap();
        for row in lv.characters {
            let ones = row.iter().filter(|&&c| (c - 1.0).abs() < 1e-9).count();
            assert_eq!(ones, 1, "row {row:?}");
        }
        // Ex/Ey pair: Ex first by the tie-break rule
        let ex = lv.index_of(ExcitedBasis::Ex);
        let ey = lv.index_of(ExcitedBasis::Ey);
        assert_eq!(ey, ex + 1);
    }

    #[test]
    fn unknown_label_is_error() {
        let lv = eigensystem(&build_excited_hamiltonian(&unstrained(0.0)).unwrap()).unwrap();
        assert!(state_character(&lv, "A3").is_err());
        assert_eq!(state_character(&lv, "a2").unwrap()[5], 1.0);
    }

    #[test]
    fn zero_strain_selection_rules() {
        let lv = eigensystem(&build_excited_hamiltonian(&unstrained(0.0)).unwrap()).unwrap();
        let dips = transition_dipoles(&lv);
        let find = |ms: i8, b: ExcitedBasis| {
            *dips.iter().find(|d| d.ground_spin == ms && d.excited_index == lv.index_of(b)).unwrap()
        };
        let a2m = find(-1, ExcitedBasis::A2);
        assert!(a2m.sigma_minus.norm() < 1e-12 && a2m.sigma_plus.norm() > 0.5);
        assert!(a2m.ellipticity < 1e-12);
        let ex0 = find(0, ExcitedBasis::Ex);
        let (x, y) = ex0.linear();
        assert!(x.norm() < 1e-12 && (y.norm() - 1.0).abs() < 1e-12);
        assert!(find(0, ExcitedBasis::A2).strength() < 1e-24);
    }

    #[test]
    fn ground_levels_split_with_field() {
        let g = GroundParams::default();
        assert_eq!(ground_levels(&g).as_array(), [0.0, 2880.0, 2880.0]);
        let g = GroundParams { b_field: 21.79, ..g };
        let l = ground_levels(&g);
        assert!(((l.plus - l.minus) / 2.0 - 61.0).abs() < 0.02);
        let g = GroundParams { zeeman_per_gauss: 1.0, b_field: 61.0, ..g };
        let l = ground_levels(&g);
        assert!((l.plus - l.minus - 122.0).abs() < 1e-12);
    }

    #[test]
    fn transition_map_labels() {
        let map = transition_map(&ExcitedStateParams::default(), &GroundParams::default()).unwrap();
        assert_eq!(map.len(), 18);
        let cross = map.iter().filter(|l| l.kind == TransitionKind::Cross).count();
        assert_eq!(cross, 8);
        let zero = |b: ExcitedBasis| map.iter().find(|l| l.ground_spin == 0 && l.excited_label == b).unwrap().offset;
        let p = ExcitedStateParams { delta_dprime: 0.0, ..Default::default() };
        let map0 = transition_map(&p, &GroundParams::default()).unwrap();
        let zero0 = |b: ExcitedBasis| map0.iter().find(|l| l.ground_spin == 0 && l.excited_label == b).unwrap().offset;
        assert!((zero0(ExcitedBasis::Ex) - zero0(ExcitedBasis::Ey)).abs() < 1e-9);
        // with the spin-spin cross term the two are still degenerate at zero strain
        assert!((zero(ExcitedBasis::Ex) - zero(ExcitedBasis::Ey)).abs() < 1e-6);
    }
}
