use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_nonnegative, check_positive, Error, Result};
use crate::levels::{
    build_excited_hamiltonian, eigensystem, ground_levels, ExcitedBasis, ExcitedStateParams, GroundParams, GroundSpin,
    HermitianMatrix6, LevelSet,
};

/// Number of levels in the open-system model.
pub const N_LEVELS: usize = 10;

/// Levels of the open-system model; the discriminant is the matrix index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    G0 = 0,
    GPlus = 1,
    GMinus = 2,
    A1 = 3,
    A2 = 4,
    Ex = 5,
    Ey = 6,
    E1 = 7,
    E2 = 8,
    S = 9,
}

impl Level {
    pub const ALL: [Level; N_LEVELS] =
        [Self::G0, Self::GPlus, Self::GMinus, Self::A1, Self::A2, Self::Ex, Self::Ey, Self::E1, Self::E2, Self::S];
    pub const GROUND: [Level; 3] = [Self::G0, Self::GPlus, Self::GMinus];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_ground(self) -> bool {
        self.index() < 3
    }

    pub fn is_excited(self) -> bool {
        (3..9).contains(&self.index())
    }

    pub fn excited(b: ExcitedBasis) -> Self {
        Self::ALL[3 + b.index()]
    }

    pub fn as_excited(self) -> Option<ExcitedBasis> {
        if self.is_excited() {
            ExcitedBasis::from_index(self.index() - 3)
        } else {
            None
        }
    }

    pub fn ground(s: GroundSpin) -> Self {
        match s {
            GroundSpin::Zero => Self::G0,
            GroundSpin::Plus => Self::GPlus,
            GroundSpin::Minus => Self::GMinus,
        }
    }

    pub fn as_ground(self) -> Option<GroundSpin> {
        match self {
            Self::G0 => Some(GroundSpin::Zero),
            Self::GPlus => Some(GroundSpin::Plus),
            Self::GMinus => Some(GroundSpin::Minus),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::G0 => "g0",
            Self::GPlus => "g+1",
            Self::GMinus => "g-1",
            Self::S => "S",
            other => other.as_excited().map(ExcitedBasis::label).unwrap_or("?"),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "g0" | "0" => Ok(Self::G0),
            "g+1" | "g+" | "+1" => Ok(Self::GPlus),
            "g-1" | "g-" | "-1" => Ok(Self::GMinus),
            "S" | "s" => Ok(Self::S),
            other => other
                .parse::<ExcitedBasis>()
                .map(Self::excited)
                .map_err(|_| Error::InvalidArgument(format!("unknown level `{s}`"))),
        }
    }
}

/// Decay fractions of one excited basis state to (g0, g+1, g-1, S).
pub type BranchingRow = [f64; 4];

/// Rate arguments of [`build_nv_model`]. Branching rows need not be normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRates {
    pub excited_lifetime: f64,
    pub singlet_lifetime: f64,
    /// Total probability per Ey (and Ex) decay of landing in ms = +-1.
    pub cross_leak_ey: f64,
    /// Rows for A1, A2, E1, E2. Ex and Ey rows follow from `cross_leak_ey`.
    pub branching_a1: BranchingRow,
    pub branching_a2: BranchingRow,
    pub branching_e12: BranchingRow,
    /// Singlet decay fractions to (g0, g+1, g-1).
    pub singlet_branching: [f64; 3],
    /// Incoherent g+-1 -> g0 rate (per ns), e.g. residual off-resonant repumping.
    pub spin_repump_rate: f64,
}

impl Default for ModelRates {
    fn default() -> Self {
        Self {
            excited_lifetime: lifetime_from_linewidth(13.0),
            singlet_lifetime: 300.0,
            cross_leak_ey: 0.01,
            branching_a1: [0.0, 0.3, 0.3, 0.4],
            branching_a2: [0.0, 0.5, 0.5, 0.0],
            branching_e12: [0.0, 0.3, 0.3, 0.4],
            singlet_branching: [1.0, 0.0, 0.0],
            spin_repump_rate: 0.0,
        }
    }
}

/// Lifetime (ns) of a transition with the given natural linewidth (MHz FWHM).
pub fn lifetime_from_linewidth(fwhm_mhz: f64) -> f64 {
    1e3 / (2.0 * std::f64::consts::PI * fwhm_mhz)
}

/// The ten-level open-system model.
#[derive(Debug, Clone, PartialEq)]
pub struct NVModel {
    pub excited_params: ExcitedStateParams,
    pub ground_params: GroundParams,
    pub excited_lifetime: f64,
    pub singlet_lifetime: f64,
    pub cross_leak_ey: f64,
    /// Normalized decay fractions of each excited basis state, [`ExcitedBasis`] order.
    pub branching: [BranchingRow; 6],
    pub singlet_branching: [f64; 3],
    pub spin_repump_rate: f64,
    hamiltonian: HermitianMatrix6,
    levels: LevelSet,
}

fn normalize<const N: usize>(name: &'static str, row: [f64; N]) -> Result<[f64; N]> {
    for &x in &row {
        check_nonnegative(name, x)?;
    }
    let sum: f64 = row.iter().sum();
    if sum <= 0.0 {
        return Err(Error::InvalidModel(format!("branching row `{name}` cannot be normalized")));
    }
    Ok(row.map(|x| x / sum))
}

pub fn build_nv_model(excited: ExcitedStateParams, ground: GroundParams, rates: &ModelRates) -> Result<NVModel> {
    ground.validate()?;
    check_positive("excited_lifetime", rates.excited_lifetime)?;
    check_positive("singlet_lifetime", rates.singlet_lifetime)?;
    check_nonnegative("spin_repump_rate", rates.spin_repump_rate)?;
    check_finite("cross_leak_ey", rates.cross_leak_ey)?;
    if !(0.0..=1.0).contains(&rates.cross_leak_ey) {
        return Err(Error::InvalidParameter {
            name: "cross_leak_ey",
            reason: format!("must be in [0, 1], got {}", rates.cross_leak_ey),
        });
    }
    let leak = rates.cross_leak_ey;
    let cycling = [1.0 - leak, leak / 2.0, leak / 2.0, 0.0];
    let e12 = normalize("branching_e12", rates.branching_e12)?;
    let branching = [
        normalize("branching_a1", rates.branching_a1)?,
        normalize("branching_a2", rates.branching_a2)?,
        cycling,
        cycling,
        e12,
        e12,
    ];
    let singlet_branching = normalize("singlet_branching", rates.singlet_branching)?;
    let hamiltonian = build_excited_hamiltonian(&excited)?;
    let levels = eigensystem(&hamiltonian)?;
    Ok(NVModel {
        excited_params: excited,
        ground_params: ground,
        excited_lifetime: rates.excited_lifetime,
        singlet_lifetime: rates.singlet_lifetime,
        cross_leak_ey: leak,
        branching,
        singlet_branching,
        spin_repump_rate: rates.spin_repump_rate,
        hamiltonian,
        levels,
    })
}

impl Default for NVModel {
    fn default() -> Self {
        build_nv_model(ExcitedStateParams::default(), GroundParams::default(), &ModelRates::default())
            .expect("default model is valid")
    }
}

impl NVModel {
    pub fn excited_hamiltonian(&self) -> &HermitianMatrix6 {
        &self.hamiltonian
    }

    pub fn level_set(&self) -> &LevelSet {
        &self.levels
    }

    /// Excited-state decay rate (per ns).
    pub fn gamma(&self) -> f64 {
        1.0 / self.excited_lifetime
    }

    /// Ground energy (MHz) of `level`, optionally at zero field.
    pub fn ground_energy(&self, level: Level, zero_field: bool) -> f64 {
        let g = if zero_field { GroundParams { b_field: 0.0, ..self.ground_params } } else { self.ground_params };
        level.as_ground().map(|s| ground_levels(&g).energy(s)).unwrap_or(0.0)
    }

    /// Eigenstate index whose character is dominated by basis state `b`.
    pub fn eigen_index(&self, b: ExcitedBasis) -> usize {
        self.levels.index_of(b)
    }

    /// Returns the same model with different excited-state parameters.
    pub fn with_excited(&self, excited: ExcitedStateParams) -> Result<NVModel> {
        let hamiltonian = build_excited_hamiltonian(&excited)?;
        let levels = eigensystem(&hamiltonian)?;
        Ok(NVModel { excited_params: excited, hamiltonian, levels, ..self.clone() })
    }

    /// Returns the same model with a different axial field (G).
    pub fn with_field(&self, b_field: f64) -> Result<NVModel> {
        let ground_params = GroundParams { b_field, ..self.ground_params };
        ground_params.validate()?;
        Ok(NVModel { ground_params, ..self.clone() })
    }

    /// Incoherent channels as (from, to, rate per ns).
    pub fn jump_channels(&self) -> Vec<(Level, Level, f64)> {
        let mut out = Vec::new();
        let gamma = self.gamma();
        for b in ExcitedBasis::ALL {
            let row = self.branching[b.index()];
            let targets = [Level::G0, Level::GPlus, Level::GMinus, Level::S];
            for (k, &to) in targets.iter().enumerate() {
                if row[k] > 0.0 {
                    out.push((Level::excited(b), to, gamma * row[k]));
                }
            }
        }
        for (k, &to) in Level::GROUND.iter().enumerate() {
            let f = self.singlet_branching[k];
            if f > 0.0 {
                out.push((Level::S, to, f / self.singlet_lifetime));
            }
        }
        if self.spin_repump_rate > 0.0 {
            out.push((Level::GPlus, Level::G0, self.spin_repump_rate));
            out.push((Level::GMinus, Level::G0, self.spin_repump_rate));
        }
        out
    }
}
