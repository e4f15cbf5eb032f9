use std::collections::VecDeque;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{check_finite, Error, Result};
use crate::levels::{emission_amplitude, ExcitedBasis};

use super::drive::{Drive, DriveKind, DriveTarget, Envelope, FrequencyReference};
use super::model::{Level, NVModel, N_LEVELS};
use super::DensityMatrix;

/// Linear frequency (MHz) to angular frequency (rad/ns).
pub const RAD_PER_NS_PER_MHZ: f64 = 2.0 * std::f64::consts::PI * 1e-3;

// Rotating-frame nodes: the three ground levels, the excited manifold, the singlet.
const N_NODES: usize = 5;
const EXC_NODE: usize = 3;
const S_NODE: usize = 4;

fn node(level: Level) -> usize {
    if level.is_ground() {
        level.index()
    } else if level.is_excited() {
        EXC_NODE
    } else {
        S_NODE
    }
}

/// Time-dependent Lindblad generator restricted to the levels reachable from
/// an initial support. Hamiltonian terms are in rad/ns in the rotating frame
/// of the drives; jump rates are per ns.
#[derive(Debug, Clone)]
pub struct Generator {
    kept: Vec<usize>,
    h0: DMatrix<C64>,
    couplings: Vec<(Envelope, DMatrix<C64>)>,
    /// (from, to, rate) in reduced indices.
    jumps: Vec<(usize, usize, f64)>,
    out_rate: Vec<f64>,
}

struct FullParts {
    h0: DMatrix<C64>,
    couplings: Vec<(Envelope, DMatrix<C64>)>,
    jumps: Vec<(usize, usize, f64)>,
}

fn drive_frequency(model: &NVModel, d: &Drive) -> (usize, usize, f64) {
    let zero_field = d.reference == FrequencyReference::ZeroField;
    let levels = model.level_set();
    let (lower, upper) = match d.target {
        DriveTarget::Pair { lower, upper } => (lower, upper),
        DriveTarget::Polarization { ground, reference, .. } => (ground, reference),
    };
    let e_lower = model.ground_energy(lower, zero_field);
    let e_upper = match (d.kind, upper.as_excited()) {
        (DriveKind::Optical, Some(b)) => levels.energies[model.eigen_index(b)],
        _ => model.ground_energy(upper, zero_field),
    };
    (node(lower), node(upper), e_upper - e_lower + d.detuning)
}

fn assign_frames(model: &NVModel, edges: &[(usize, usize, f64)]) -> Result<[f64; N_NODES]> {
    let mut frame = [0.0; N_NODES];
    let mut seen = [false; N_NODES];
    for root in 0..N_NODES {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        frame[root] = if root < 3 { model.ground_energy(Level::GROUND[root], false) } else { 0.0 };
        let mut queue = VecDeque::from([root]);
        while let Some(n) = queue.pop_front() {
            for &(lo, up, w) in edges {
                let (other, f_other) = if lo == n {
                    (up, frame[n] + w)
                } else if up == n {
                    (lo, frame[n] - w)
                } else {
                    continue;
                };
                if seen[other] {
                    if (frame[other] - f_other).abs() > 1e-6 * (1.0 + w.abs()) {
                        return Err(Error::InvalidDrive("drive frequencies admit no common rotating frame".into()));
                    }
                } else {
                    seen[other] = true;
                    frame[other] = f_other;
                    queue.push_back(other);
                }
            }
        }
    }
    Ok(frame)
}

fn coupling_operator(model: &NVModel, d: &Drive) -> DMatrix<C64> {
    let mut v = DMatrix::<C64>::zeros(N_LEVELS, N_LEVELS);
    let amp = C64::from_polar(0.5 * d.rabi_frequency * RAD_PER_NS_PER_MHZ, d.phase);
    let (ground, column): (Level, [C64; 6]) = match d.target {
        DriveTarget::Pair { lower, upper } if d.kind == DriveKind::Microwave => {
            v[(upper.index(), lower.index())] = amp;
            v[(lower.index(), upper.index())] = amp.conj();
            return v;
        }
        DriveTarget::Pair { lower, upper } => {
            let b = upper.as_excited().expect("validated optical target");
            let psi = model.level_set().state(model.eigen_index(b));
            (lower, std::array::from_fn(|k| psi[k]))
        }
        DriveTarget::Polarization { ground, sigma_plus, sigma_minus, .. } => {
            let norm = (sigma_plus.norm_sqr() + sigma_minus.norm_sqr()).sqrt();
            let (ep, em) = (sigma_plus / norm, sigma_minus / norm);
            let spin = ground.as_ground().expect("validated ground");
            (
                ground,
                std::array::from_fn(|k| {
                    let e = emission_amplitude(spin, ExcitedBasis::ALL[k]);
                    e[0].conj() * ep + e[1].conj() * em
                }),
            )
        }
    };
    for (k, c) in column.iter().enumerate() {
        let row = 3 + k;
        v[(row, ground.index())] = amp * c;
        v[(ground.index(), row)] = (amp * c).conj();
    }
    v
}

fn full_parts(model: &NVModel, drives: &[Drive], detuning_offset: f64) -> Result<FullParts> {
    check_finite("detuning_offset", detuning_offset)?;
    for d in drives {
        d.validate()?;
    }
    let edges: Vec<_> = drives.iter().map(|d| drive_frequency(model, d)).collect();
    let frame = assign_frames(model, &edges)?;

    let mut h0 = DMatrix::<C64>::zeros(N_LEVELS, N_LEVELS);
    for g in Level::GROUND {
        h0[(g.index(), g.index())] = C64::new(model.ground_energy(g, false) - frame[node(g)], 0.0);
    }
    let hes = model.excited_hamiltonian().matrix();
    for i in 0..6 {
        for j in 0..6 {
            let mut x = hes[(i, j)];
            if i == j {
                x += C64::new(detuning_offset - frame[EXC_NODE], 0.0);
            }
            h0[(3 + i, 3 + j)] = x;
        }
    }
    h0[(Level::S.index(), Level::S.index())] = C64::new(-frame[S_NODE], 0.0);
    h0 *= C64::new(RAD_PER_NS_PER_MHZ, 0.0);

    let couplings = drives.iter().map(|d| (d.envelope.clone(), coupling_operator(model, d))).collect();
    let jumps = model.jump_channels().into_iter().map(|(f, t, r)| (f.index(), t.index(), r)).collect();
    Ok(FullParts { h0, couplings, jumps })
}

impl Generator {
    /// Generator on all ten levels.
    pub fn new(model: &NVModel, drives: &[Drive], detuning_offset: f64) -> Result<Self> {
        Self::reduced(model, drives, detuning_offset, &[true; N_LEVELS])
    }

    /// Generator on the levels reachable from `support`. Dynamics of any state
    /// supported on `support` are reproduced exactly.
    pub fn reduced(
        model: &NVModel,
        drives: &[Drive],
        detuning_offset: f64,
        support: &[bool; N_LEVELS],
    ) -> Result<Self> {
        let parts = full_parts(model, drives, detuning_offset)?;
        let mut reach = *support;
        let mut queue: VecDeque<usize> = (0..N_LEVELS).filter(|&i| reach[i]).collect();
        while let Some(i) = queue.pop_front() {
            let mut visit = |j: usize, reach: &mut [bool; N_LEVELS]| {
                if !reach[j] {
                    reach[j] = true;
                    queue.push_back(j);
                }
            };
            for j in 0..N_LEVELS {
                let coupled =
                    parts.h0[(j, i)].norm() > 0.0 || parts.couplings.iter().any(|(_, v)| v[(j, i)].norm() > 0.0);
                if coupled && j != i {
                    visit(j, &mut reach);
                }
            }
            for &(f, t, _) in &parts.jumps {
                if f == i {
                    visit(t, &mut reach);
                }
            }
        }
        let kept: Vec<usize> = (0..N_LEVELS).filter(|&i| reach[i]).collect();
        let n = kept.len();
        let pick = |m: &DMatrix<C64>| DMatrix::from_fn(n, n, |a, b| m[(kept[a], kept[b])]);
        let pos = |full: usize| kept.iter().position(|&k| k == full);
        let jumps: Vec<_> = parts.jumps.iter().filter_map(|&(f, t, r)| Some((pos(f)?, pos(t)?, r))).collect();
        let mut out_rate = vec![0.0; n];
        for &(f, _, r) in &jumps {
            out_rate[f] += r;
        }
        Ok(Self {
            h0: pick(&parts.h0),
            couplings: parts.couplings.iter().map(|(e, v)| (e.clone(), pick(v))).collect(),
            jumps,
            out_rate,
            kept,
        })
    }

    pub fn dim(&self) -> usize {
        self.kept.len()
    }

    /// Full-model indices of the retained levels, ascending.
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn is_time_independent(&self) -> bool {
        self.couplings.iter().all(|(e, _)| e.is_constant())
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.couplings.iter().flat_map(|(e, _)| e.breakpoints()).collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// Hamiltonian (rad/ns) at time `t`.
    pub fn hamiltonian(&self, t: f64) -> DMatrix<C64> {
        let mut h = self.h0.clone();
        for (env, v) in &self.couplings {
            let a = env.value(t);
            if a != 0.0 {
                h += v * C64::new(a, 0.0);
            }
        }
        h
    }

    /// Jump operators sqrt(rate) |to><from| in reduced indices.
    pub fn jump_operators(&self) -> Vec<DMatrix<C64>> {
        let n = self.dim();
        self.jumps
            .iter()
            .map(|&(f, t, r)| {
                let mut l = DMatrix::zeros(n, n);
                l[(t, f)] = C64::new(r.sqrt(), 0.0);
                l
            })
            .collect()
    }

    /// Matrix form of the master equation, written into `out`.
    pub fn rhs_with(&self, h: &DMatrix<C64>, rho: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        let minus_i = C64::new(0.0, -1.0);
        let comm = h * rho - rho * h;
        out.copy_from(&(comm * minus_i));
        let n = self.dim();
        for j in 0..n {
            for i in 0..n {
                let g = 0.5 * (self.out_rate[i] + self.out_rate[j]);
                if g != 0.0 {
                    out[(i, j)] -= rho[(i, j)] * g;
                }
            }
        }
        for &(f, t, r) in &self.jumps {
            out[(t, t)] += rho[(f, f)] * r;
        }
    }

    pub fn rhs(&self, t: f64, rho: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        let h = self.hamiltonian(t);
        self.rhs_with(&h, rho, out);
    }

    /// Column-stacked superoperator at time `t`:
    /// -i(I (x) H - H^T (x) I) + sum_k [conj(L_k) (x) L_k - 1/2 I (x) L_k^+ L_k - 1/2 (L_k^+ L_k)^T (x) I].
    pub fn superoperator_at(&self, t: f64) -> DMatrix<C64> {
        let n = self.dim();
        let id = DMatrix::<C64>::identity(n, n);
        let h = self.hamiltonian(t);
        let mut sup = (id.kronecker(&h) - h.transpose().kronecker(&id)) * C64::new(0.0, -1.0);
        let half = C64::new(0.5, 0.0);
        for l in self.jump_operators() {
            let ldl = l.adjoint() * &l;
            sup += l.map(|c| c.conj()).kronecker(&l);
            sup -= id.kronecker(&ldl) * half;
            sup -= ldl.transpose().kronecker(&id) * half;
        }
        sup
    }

    /// Restricts a full density matrix to the retained levels.
    pub fn restrict(&self, rho: &DensityMatrix) -> DMatrix<C64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |a, b| rho.matrix()[(self.kept[a], self.kept[b])])
    }

    /// Embeds a reduced matrix back into the ten-level space.
    pub fn embed(&self, reduced: &DMatrix<C64>) -> DMatrix<C64> {
        let mut full = DMatrix::zeros(N_LEVELS, N_LEVELS);
        for (a, &i) in self.kept.iter().enumerate() {
            for (b, &j) in self.kept.iter().enumerate() {
                full[(i, j)] = reduced[(a, b)];
            }
        }
        full
    }
}

/// Column-stacking vectorization.
pub fn vectorize(m: &DMatrix<C64>) -> nalgebra::DVector<C64> {
    nalgebra::DVector::from_column_slice(m.as_slice())
}

pub fn unvectorize(v: &nalgebra::DVector<C64>, n: usize) -> DMatrix<C64> {
    DMatrix::from_column_slice(n, n, v.as_slice())
}

/// Lindblad superoperator (100 x 100) on the full model with every drive at
/// full envelope amplitude; `detuning_offset` shifts all excited levels (MHz).
pub fn liouvillian(model: &NVModel, drives: &[Drive], detuning_offset: f64) -> Result<Superoperator> {
    let drives: Vec<Drive> = drives
        .iter()
        .map(|d| {
            d.validate()?;
            Ok(d.clone().with_envelope(Envelope::Constant))
        })
        .collect::<Result<_>>()?;
    let g = Generator::new(model, &drives, detuning_offset)?;
    Ok(Superoperator { matrix: g.superoperator_at(0.0) })
}

/// dρ/dt = L vec(ρ) in column-stacking order, units 1/ns.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    pub matrix: DMatrix<C64>,
}

impl Superoperator {
    pub fn apply(&self, rho: &DensityMatrix) -> DMatrix<C64> {
        unvectorize(&(&self.matrix * vectorize(rho.matrix())), N_LEVELS)
    }

    /// Largest |sum of diagonal rows| over columns; zero for a trace-preserving generator.
    pub fn trace_defect(&self) -> f64 {
        let n = (self.matrix.nrows() as f64).sqrt().round() as usize;
        (0..self.matrix.ncols())
            .map(|c| (0..n).map(|i| self.matrix[(i + n * i, c)]).sum::<C64>().norm())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::model::{build_nv_model, ModelRates};
    use crate::levels::ExcitedStateParams;
    use rand::{Rng, SeedableRng};

    fn random_rho(rng: &mut impl Rng, n: usize) -> DMatrix<C64> {
        let a = DMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let m = &a * a.adjoint();
        let tr = m.trace();
        m / tr
    }

    #[test]
    fn superoperator_matches_matrix_form() {
        let model = build_nv_model(
            ExcitedStateParams::default().with_strain(300.0, -150.0),
            crate::levels::GroundParams { b_field: 10.0, ..Default::default() },
            &ModelRates { spin_repump_rate: 0.01, ..Default::default() },
        )
        .unwrap();
        let drives = [
            Drive::optical(Level::G0, Level::Ey, 40.0, 3.0),
            Drive::microwave(Level::GPlus, 5.0, -1.0),
            Drive::optical(Level::GMinus, Level::A2, 10.0, 0.5).with_phase(0.7),
        ];
        let g = Generator::new(&model, &drives, 12.0).unwrap();
        let sup = g.superoperator_at(0.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let rho = random_rho(&mut rng, 10);
            let mut out = DMatrix::zeros(10, 10);
            g.rhs(0.0, &rho, &mut out);
            let via_sup = unvectorize(&(&sup * vectorize(&rho)), 10);
            assert!((out - via_sup).norm() < 1e-12);
        }
    }

    #[test]
    fn trace_annihilating() {
        let drives = [Drive::optical(Level::G0, Level::Ey, 20.0, 0.0), Drive::microwave(Level::GMinus, 3.0, 0.0)];
        let l = liouvillian(&NVModel::default(), &drives, 0.0).unwrap();
        assert!(l.trace_defect() < 1e-12);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let rho = DensityMatrix::from_matrix_unchecked(random_rho(&mut rng, 10));
            assert!(l.apply(&rho).trace().norm() < 1e-12);
        }
    }

    #[test]
    fn pure_decay_rate() {
        let model = NVModel::default();
        let l = liouvillian(&model, &[], 0.0).unwrap();
        let rho = DensityMatrix::pure(Level::Ey);
        let d = l.apply(&rho);
        let rate = -d[(Level::Ey.index(), Level::Ey.index())].re;
        assert!((rate - 1.0 / model.excited_lifetime).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_frames_rejected() {
        let drives = [Drive::optical(Level::G0, Level::Ey, 1.0, 0.0), Drive::optical(Level::G0, Level::Ex, 1.0, 50.0)];
        let err = Generator::new(&NVModel::default(), &drives, 0.0).unwrap_err();
        assert!(matches!(err, Error::InvalidDrive(_)));
    }

    #[test]
    fn reduction_keeps_reachable_levels() {
        let model = build_nv_model(
            ExcitedStateParams { delta_dprime: 0.0, ..Default::default() },
            Default::default(),
            &Default::default(),
        )
        .unwrap();
        let mut support = [false; N_LEVELS];
        support[0] = true;
        let g = Generator::reduced(&model, &[Drive::optical(Level::G0, Level::Ey, 1.0, 0.0)], 0.0, &support).unwrap();
        assert_eq!(g.kept(), &[0, 1, 2, Level::Ey.index()]);
    }
}
